//! Small dense-vector helpers and a preconditioned conjugate-gradient solver.
//!
//! All reductions run sequentially in index order so results are reproducible
//! bit for bit.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn mean(a: &[f64]) -> f64 {
    if a.is_empty() {
        0.0
    } else {
        a.iter().sum::<f64>() / a.len() as f64
    }
}

/// Subtracts the arithmetic mean in place.
pub fn remove_mean(a: &mut [f64]) {
    let m = mean(a);
    a.iter_mut().for_each(|x| *x -= m);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` for symmetric positive (semi)definite `A`, given as a matvec.
///
/// `precond` holds the inverse diagonal (Jacobi), or is empty for none. With
/// `project_constants`, iterates are kept orthogonal to the constant vector,
/// which makes singular Laplacian-type systems with a consistent right-hand
/// side well posed. `x` is the initial guess on entry.
pub fn conjugate_gradient<F>(
    apply: F,
    b: &[f64],
    x: &mut [f64],
    precond: &[f64],
    rel_tol: f64,
    max_iter: usize,
    project_constants: bool,
) -> CgOutcome
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let project = |v: &mut [f64]| {
        if project_constants {
            remove_mean(v);
        }
    };
    let mut rhs = b.to_vec();
    project(&mut rhs);
    project(x);
    let bnorm = norm(&rhs);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome { iterations: 0, relative_residual: 0.0, converged: true };
    }

    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    project(&mut r);
    let precondition = |r: &[f64], z: &mut [f64]| {
        if precond.is_empty() {
            z.copy_from_slice(r);
        } else {
            for i in 0..n {
                z[i] = r[i] * precond[i];
            }
        }
    };
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    let mut rel = norm(&r) / bnorm;
    let mut it = 0;
    while rel > rel_tol && it < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        project(&mut r);
        it += 1;
        rel = norm(&r) / bnorm;
        if rel <= rel_tol {
            break;
        }
        precondition(&r, &mut z);
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    project(x);
    CgOutcome { iterations: it, relative_residual: rel, converged: rel <= rel_tol }
}
