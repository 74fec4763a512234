//! K^delta from the truncated series, its homogenized matrix and the contrast scaling.
use annealed_green::perturbation::{q_matrix, MomentModel, SeriesExpansion};

fn main() -> annealed_green::Result<()> {
    let series = SeriesExpansion::new(&MomentModel::rademacher(), 3, 3, 3, 32)?;
    let k = series.kernel(0.15)?;
    let h = q_matrix(&k)?;
    println!("K^0.15: {} sites, max entry {:.3e}, symmetry defect {:.1e}", k.len(), k.max_entry(), k.symmetry_defect());
    println!("Q = {:.7}sigma = {:.7}", h.q(), h.sigma());

    println!("delta  max|K|     (1 - lambda_min)/delta^2");
    for delta in [0.02, 0.05, 0.1, 0.2] {
        let k = series.kernel(delta)?;
        let lmin = q_matrix(&k)?.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        println!("{delta:<6} {:.3e}  {:.4}", k.max_entry(), (1.0 - lmin) / (delta * delta));
    }

    let mut csv = Vec::new();
    k.write_csv(&mut csv)?;
    let text = String::from_utf8_lossy(&csv);
    println!("first rows of the CSV export:");
    text.lines().take(4).for_each(|l| println!("  {l}"));
    Ok(())
}
