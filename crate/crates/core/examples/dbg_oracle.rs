use orlab_core::env::{EnvSpec, oracle::OracleModel};
fn main() {
    let spec = EnvSpec::point_maze();
    let goal = spec.fixed_goal().unwrap();
    let o = OracleModel::solve_maze(&spec, 2, 0.99, &goal).unwrap();
    let n = o.n_states();
    let ties = (0..n).filter(|&s| o.is_tie(s)).count();
    let terms = (0..n).filter(|&s| o.is_terminal(s)).count();
    println!("states={n} ties={ties} terminal={terms}");
}
