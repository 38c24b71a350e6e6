use otchain::costs::{CostEnv, CostField};
use otchain::geometry::sample_circle;
use otchain::measure::DiscreteMeasure;
use otchain::transport::solve_kantorovich;
use std::time::Instant;

fn main() {
    for &n in &[60usize, 120, 360] {
        let s = sample_circle(n, 1.0, [0.0, 0.0]).unwrap();
        let field = CostField::QuadraticAmbient;
        let env = CostEnv::new(&field, &s, &s);
        let cost = env.matrix().unwrap();
        let mu = DiscreteMeasure::random_positive(n, 1);
        let nu = DiscreteMeasure::random_positive(n, 2);
        let t0 = Instant::now();
        let sol = solve_kantorovich(&cost, &mu, &nu).unwrap();
        let solve_t = t0.elapsed();
        let t1 = Instant::now();
        let core = sol.support_core().unwrap();
        let core_t = t1.elapsed();
        println!(
            "n={n}: solve {:?} ({} pivots), support {} entries, core {} pairs in {:?}",
            solve_t, sol.pivots, sol.plan.entries.len(), core.len(), core_t
        );
    }
}
