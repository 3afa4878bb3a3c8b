# Core module for riskgrid
