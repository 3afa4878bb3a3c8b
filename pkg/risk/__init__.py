# Coherent transition risk mappings
