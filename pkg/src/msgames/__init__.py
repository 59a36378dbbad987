"""Multi-scale network games: models, equilibrium solvers and benchmarks."""
