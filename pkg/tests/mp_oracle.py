"""Extended-precision finite differences, independent of the float64 recursion."""
import mpmath


def mp_log_partition(values, beta, dps=40):
    """ln Z_n by the plain layer recursion in ``dps``-digit arithmetic."""
    with mpmath.workdps(dps):
        beta = mpmath.mpf(beta)
        z = [mpmath.mpf(1)]
        for i, row in enumerate(values, start=1):
            new = []
            for k in range(i + 1):
                left = z[k - 1] if k >= 1 else 0
                right = z[k] if k < i else 0
                new.append((left + right) / 2 * mpmath.exp(beta * mpmath.mpf(row[k])))
            z = new
        return mpmath.log(mpmath.fsum(z))


def mp_site_derivative(field, beta, i, x, h=1e-8, dps=40):
    """Central difference of ln Z_n in eta(i, x), step ``h``, at ``dps`` digits."""
    rows = [list(map(float, field.row(j))) for j in range(1, field.n + 1)]
    k = (x + i) // 2
    with mpmath.workdps(dps):
        base = mpmath.mpf(rows[i - 1][k])
        hh = mpmath.mpf(h)
        up = [r[:] for r in rows]
        dn = [r[:] for r in rows]
        up[i - 1][k] = base + hh
        dn[i - 1][k] = base - hh
        return float((mp_log_partition(up, beta, dps) - mp_log_partition(dn, beta, dps)) / (2 * hh))
