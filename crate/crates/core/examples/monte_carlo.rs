//! Sampling oracle on a small box: pointwise estimates and the K^delta quadratic form.
use annealed_green::montecarlo::{box_bias, estimate_annealed_green, estimate_kdelta_form, McConfig};
use annealed_green::perturbation::{kdelta_kernel, q_matrix, Law, MomentModel};
use annealed_green::quadrature::{AnnealedGreen, QuadratureConfig};
use annealed_green::Boundary;

fn main() -> annealed_green::Result<()> {
    let (extent, n) = (17, 200);
    let k = kdelta_kernel(&MomentModel::rademacher(), 3, 0.15, 3, 3, 32)?;
    let h = q_matrix(&k)?;
    let points = vec![vec![0, 0, 0], vec![2, 0, 0], vec![1, 1, 1]];

    let cfg = McConfig::new(Law::Rademacher, 3, 0.15, extent, Boundary::ZeroExtension, n, 7);
    let est = estimate_annealed_green(&cfg, &points)?;
    let bias = box_bias(h.q(), extent, &points)?;
    let quad = AnnealedGreen::new(&k, &QuadratureConfig::for_dim(3))?.values(&points)?;
    for (((x, e), b), q) in points.iter().zip(&est).zip(&bias).zip(&quad) {
        let z = (e.mean - b - q) / e.stderr;
        println!("{x:?}: box mean {:.6} +- {:.1e}, corrected {:.6}, quadrature {q:.6}, z = {z:+.2}", e.mean, e.stderr, e.mean - b);
    }

    let periodic = McConfig { boundary: Boundary::Periodic, ..cfg };
    for f in estimate_kdelta_form(&periodic, &[vec![1, 0, 0], vec![1, 1, 1]])? {
        println!("k = {:?}: v*Kv = {:.3e} +- {:.1e}", f.frequency, f.form.mean, f.form.stderr);
    }
    Ok(())
}
