//! The walk kernel T with m = 4d(1 - T-hat): mass, aperiodicity, and the sign of min T.
use annealed_green::perturbation::{aperiodicity_check, positivity_scan, t_kernel, MomentModel, SeriesExpansion};
use annealed_green::symbols::nonvanishing_check;

fn main() -> annealed_green::Result<()> {
    for model in [MomentModel::rademacher(), MomentModel::uniform(), MomentModel::two_point(0.7)?] {
        let series = SeriesExpansion::new(&model, 3, 3, 3, 32)?;
        let t = t_kernel(&series.kernel(0.15)?);
        let nv = nonvanishing_check(&t, 32, 0.3)?;
        println!(
            "{:<10} sum T = {:.16}, aperiodic: {}, min |1 - T^|^2 = {:.3e}",
            model.name(),
            t.total(),
            aperiodicity_check(&t).holds,
            nv.min_value
        );
        for row in positivity_scan(&series, 6, &[0.05, 0.1, 0.2])? {
            println!("    delta {:<4} min T = {:+.3e} at {}", row.delta, row.min, row.argmin);
        }
    }
    Ok(())
}
