# Applications module for riskgrid
