//! Per-scale pieces of the bounded quadrature remainder over a dyadic partition of unity.
use annealed_green::perturbation::{kdelta_kernel, MomentModel};
use annealed_green::quadrature::{AnnealedGreen, QuadratureConfig};

fn main() -> annealed_green::Result<()> {
    let k = kdelta_kernel(&MomentModel::rademacher(), 3, 0.15, 3, 3, 32)?;
    let g = AnnealedGreen::new(&k, &QuadratureConfig::for_dim(3).with_resolution(64))?;
    for probe in g.dyadic_probe(&[vec![2, 0, 0], vec![8, 0, 0]])? {
        println!("x = {:?}: sum of scales - direct = {:.1e}", probe.x, probe.total() - probe.direct);
        let mut csv = Vec::new();
        probe.write_csv(&mut csv)?;
        print!("{}", String::from_utf8_lossy(&csv));
    }
    Ok(())
}
