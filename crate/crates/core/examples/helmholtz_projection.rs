//! The discrete Helmholtz projection F = v v^* / |v|^2 and its kernel at the origin.
use annealed_green::symbols::{helmholtz_symbol, HelmholtzTable, TorusPoint};

fn main() -> annealed_green::Result<()> {
    for angles in [vec![0.3, -1.2, 2.0], vec![3.0, 0.1, -0.1]] {
        let f = helmholtz_symbol(&TorusPoint::new(angles.clone())?)?;
        let idem = (&f * &f - &f).norm();
        println!("theta {angles:?}: tr F = {:.15}, |F^2 - F| = {idem:.1e}", f.trace().re);
    }

    // F(0) = I/d only on the diagonal: forward bonds of one site share sigma(x).
    let table = HelmholtzTable::new(3, 64)?;
    println!("origin block of the projection kernel (N = 64):");
    for j in 0..3 {
        let row: Vec<String> = (0..3).map(|k| format!("{:+.6}", table.entry(j, k, &[0, 0, 0]))).collect();
        println!("  {}", row.join("  "));
    }
    Ok(())
}
