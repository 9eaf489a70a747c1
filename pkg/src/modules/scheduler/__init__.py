# Worker pool for restarts, kernels and sweep cells
