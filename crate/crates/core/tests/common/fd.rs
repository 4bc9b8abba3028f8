use coalition_nash::game::CoalitionGame;
use nalgebra::DVector;

/// Central differences of each coalition's cost along its own block.
pub fn fd_pseudogradient(game: &CoalitionGame, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(x.len());
    for i in 0..game.num_coalitions() {
        for k in game.coalition_range(i) {
            let h = 1e-5 * x[k].abs().max(1.0);
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[k] += h;
            dn[k] -= h;
            out[k] = (game.coalition_cost(i, &up).unwrap() - game.coalition_cost(i, &dn).unwrap()) / (2.0 * h);
        }
    }
    out
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}
