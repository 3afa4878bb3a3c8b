# Run persistence for riskgrid
