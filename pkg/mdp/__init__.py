# Tabular Markov decision processes and exact solvers
