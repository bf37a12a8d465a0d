use polyopt::driver::{minimize, parse_problem, RunConfig, Strategy};
use std::time::Instant;

fn run(name: &str, src: &str, cfg: &RunConfig) {
    let p = parse_problem(src).unwrap();
    let t0 = Instant::now();
    match minimize(&p, cfg) {
        Ok(out) => println!(
            "=== {name} ({:.1?}) ===\n{}",
            t0.elapsed(),
            out.report.render()
        ),
        Err(e) => println!("=== {name} ({:.1?}) ===\nerror: {e}", t0.elapsed()),
    }
}

fn main() {
    let which: Vec<String> = std::env::args().skip(1).collect();
    let all = which.is_empty();
    let has = |n: &str| all || which.iter().any(|w| w == n);

    if has("halfline") {
        run(
            "cubic halfline",
            "vars x\nminimize x\ngeq x^3\n",
            &RunConfig::default(),
        );
    }
    if has("twisted") {
        run(
            "twisted cubic",
            "vars x y z\nminimize x^2 + y^2 + z^2\n\
             eq (x + z + 1)*(y + z) - (x + y)^2\n\
             eq (x + z + 1)^2 - (y + z)*(x + y)\n\
             eq (x + z + 1)*(x + y) - (y + z)^2\n",
            &RunConfig {
                strategy: Strategy::FjMinors,
                fj_rank: Some(2),
                ..RunConfig::default()
            },
        );
    }
    if has("motzkin") {
        run(
            "motzkin gradient",
            "vars x y\nminimize 1 + x^4*y^2 + x^2*y^4 - 3*x^2*y^2\n",
            &RunConfig {
                strategy: Strategy::Gradient,
                ..RunConfig::default()
            },
        );
    }
    if has("robinson") {
        run(
            "robinson gradient",
            "vars x y\nminimize 1 + x^6 - x^4 - x^2 + y^6 - y^4 - y^2 - x^4*y^2 - x^2*y^4 + 3*x^2*y^2\n",
            &RunConfig {
                strategy: Strategy::Gradient,
                ..RunConfig::default()
            },
        );
    }
    if has("perturbed") {
        run(
            "perturbed motzkin ball",
            "vars x y z\n\
             minimize x^4*y^2 + x^2*y^4 - 3*x^2*y^2*z^2 + z^6 + 0.005*(x^6 + y^6 + z^6)\n\
             geq 1 - x^2 - y^2 - z^2\n",
            &RunConfig {
                strategy: Strategy::FjMinors,
                ..RunConfig::default()
            },
        );
    }
    if has("ball") {
        run(
            "motzkin ball",
            "vars x y z\n\
             minimize x^4*y^2 + x^2*y^4 - 3*x^2*y^2*z^2 + z^6\n\
             geq 1 - x^2 - y^2 - z^2\n",
            &RunConfig {
                strategy: Strategy::FjMinors,
                ..RunConfig::default()
            },
        );
    }
    if has("torus") {
        run(
            "torus",
            "vars x y z\nminimize z\n\
             eq 9 - 10*x^2 - 10*y^2 + 6*z^2 + x^4 + 2*x^2*y^2 + 2*x^2*z^2 + 2*y^2*z^2 + y^4 + z^4\n",
            &RunConfig {
                strategy: Strategy::Direct,
                ..RunConfig::default()
            },
        );
    }
}
