use polyopt::certify;
use polyopt::constraints::{ConstraintSet, Provenance};
use polyopt::driver::parse_problem;
use polyopt::moment::{assemble, moment_matrix, AssembleOptions};
use polyopt::sdp::{solve_relaxation, SdpOptions};

fn main() {
    let p = parse_problem(
        "vars x y z\nminimize z\n\
         eq 9 - 10*x^2 - 10*y^2 + 6*z^2 + x^4 + 2*x^2*y^2 + 2*x^2*z^2 + 2*y^2*z^2 + y^4 + z^4\n",
    )
    .unwrap();
    let set = ConstraintSet::from_instance(&p, Provenance::Direct);
    let t = 2;
    let rel = assemble(&p.objective, &set, t, &AssembleOptions::default()).unwrap();
    let sol = solve_relaxation(&rel, &SdpOptions::default());
    let lf = sol.linear_form.as_ref().unwrap();
    let (rank, spec) = certify::numerical_rank(&moment_matrix(lf, t).mat, 1e-6);
    println!("rank {rank}  spectrum {:?}", spec.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>());
    let kernel = certify::kernel_basis(lf, 1e-6);
    println!("kernel dim {}", kernel.len());
    for (i, k) in kernel.iter().enumerate() {
        println!("  k{i}: {}", k.clip(5e-3).display(&p.vars));
    }
    let stairs = certify::reduce_generators(&kernel, 1e-5);
    println!("reduced:");
    for s in &stairs {
        println!("  {}", s.display(&p.vars));
    }
    let mm = moment_matrix(lf, t);
    for s in &stairs {
        if let Some(v) = certify::coefficient_vector(s, &mm.basis) {
            let r = (&mm.mat * &v).amax() / v.amax();
            println!("  residual {:.2e} for {}", r, s.clip(1e-4).display(&p.vars));
        }
    }
}
