//! Splits a random boundary unitary into Dirichlet constraints and a Robin
//! block, and reports its spectral gap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qbound::boundary::{cayley_decompose, spectral_gap, BoundaryUnitary};
use qbound::linalg::haar_unitary;

fn main() -> qbound::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [2, 4] {
        let u = BoundaryUnitary::new(haar_unitary(n, &mut rng))?;
        let bc = cayley_decompose(&u, 1e-10)?;
        let gap = spectral_gap(&u);
        println!("dim {n}");
        println!("  eigenphases      {:?}", u.phases());
        println!("  dirichlet rows   {}", bc.n_dirichlet());
        println!("  robin spectrum   {:?}", bc.robin_eigenvalues());
        println!("  gap              {:.4} ({:?})", gap.gap, gap.classification);
    }
    // U = -I: everything is Dirichlet
    let bc = cayley_decompose(&BoundaryUnitary::new(-BoundaryUnitary::identity(2).matrix().clone())?, 1e-10)?;
    println!("U = -I: {} dirichlet rows, robin block {}x{}", bc.n_dirichlet(), bc.robin().nrows(), bc.robin().ncols());
    Ok(())
}
