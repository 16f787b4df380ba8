"""Pure-Python reverse sweep; same contract as the compiled kernel."""


def reverse_sweep(ptr, par, partial, grad, root):
    ptr = ptr.tolist()
    par = par.tolist()
    partial = partial.tolist()
    g_all = grad.tolist()
    for node in range(root, -1, -1):
        g = g_all[node]
        if g != 0.0:
            for k in range(ptr[node], ptr[node + 1]):
                g_all[par[k]] += g * partial[k]
    grad[:] = g_all
