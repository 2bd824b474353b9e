use frailcomp::estimation::FitOptions;
use frailcomp::hazard::TvcKind;
use frailcomp::simulation::{generate, select_tvc_model, Dependence, SimDesign};
use std::time::Instant;

#[test]
fn probe_select() {
    for seed in [6000u64, 6001] {
        let design = SimDesign::table(TvcKind::Co, Dependence::Medium, 500, seed);
        let ds = generate(&design).unwrap();
        let t = Instant::now();
        let (table, fits) = select_tvc_model(&ds, &design.spec, &FitOptions::default()).unwrap();
        let iters: Vec<usize> = fits.iter().map(|(_, f)| f.convergence.iterations).collect();
        let conv: Vec<bool> = fits.iter().map(|(_, f)| f.convergence.converged).collect();
        println!("seed {seed}: select={:?} best={} iters={iters:?} conv={conv:?}", t.elapsed(), table[0].label);
    }
}
