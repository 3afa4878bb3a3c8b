# Tests for riskgrid
