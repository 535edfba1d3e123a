use aoisim::beamform::*;
use aoisim::channel::draw_channels;
use aoisim::linkmodel::TimeSplit;
use aoisim::scenario::{draw_fading, table_scenario};
use aoisim::solver::{solve, Tolerances};
use nalgebra::Vector3;

fn main() {
    let mut scen = table_scenario(1, 1);
    scen.num_uavs = 1;
    scen.num_antennas = 2;
    scen.rician_factor = f64::INFINITY;
    scen.gu_positions = vec![Vector3::new(120.0, 80.0, 0.0)];
    scen.uav_initial_positions = vec![Vector3::new(100.0, 100.0, 10.0)];
    let access = vec![vec![true]];
    let time = vec![TimeSplit { fly: 0.0, sense: 0.2, forward: 0.8 }];
    let fading = draw_fading(&scen, 0);
    let ch = draw_channels(&scen.uav_initial_positions, &fading, &scen);
    let inst = BeamInstance {
        scenario: &scen,
        channels: &ch,
        access: &access,
        time: &time,
        weights: vec![1.0],
        order: vec![0],
    };
    let beams = initial_beams(&scen);
    println!("initial beam: {:?}", beams[0]);
    let iterate = BeamIterate::from_beams(&inst, &beams, &beams, 1.0);
    println!("x_tau = {:?}, y_tau = {:?}", iterate.x_tau, iterate.y_tau);
    let (p, map) = build_penalized_sdp(&inst, &iterate);
    println!("vars = {}, affine = {}, convex = {}", p.num_vars(), p.num_affine_ineqs(), p.num_convex());
    let sol = solve(&p, None, &Tolerances { max_inner: 300, max_outer: 60, ..Default::default() });
    println!("status = {:?}, obj = {}, viol = {:.3e}, iters = {}", sol.status, sol.objective, sol.max_violation, sol.iterations);
    println!("s value = {}", sol.values[map.s_index[0]]);
    println!("x value = {:?}", map.x_index[0].as_ref().map(|idx| idx.iter().map(|&i| sol.values[i]).collect::<Vec<_>>()));
    println!("y value = {}", sol.values[map.y_index[0]]);

    // per-iteration diagnostics
    let mut iterate2 = BeamIterate::from_beams(&inst, &beams, &beams, 1.0);
    let mut warm2: Option<Vec<f64>> = None;
    for tau in 0..6 {
        let (p2, map2) = build_penalized_sdp(&inst, &iterate2);
        let start: Vec<f64> = warm2.clone().unwrap_or_else(|| {
            let mut v0 = vec![0.0; p2.num_vars()];
            let dim = 4;
            let off_s = p2.mat_index(map2.es_blocks[0], 0, 0);
            let off_t = p2.mat_index(map2.et_blocks[0], 0, 0);
            for r in 0..dim { for c in 0..dim {
                v0[off_s + r*dim + c] = iterate2.w_s[0][(r, c)];
                v0[off_t + r*dim + c] = iterate2.w_t[0][(r, c)];
            }}
            v0[map2.y_index[0]] = iterate2.y_tau[0];
            if let Some(idx) = map2.x_index[0].as_ref() { v0[idx[0]] = iterate2.x_tau[0][0]; }
            v0
        });
        let sol2 = solve(&p2, Some(&start), &Tolerances { max_inner: 300, max_outer: 60, ..Default::default() });
        println!("tau {tau}: status {:?} iters {} s {} viol {:.2e} kappa {:.1e}",
            sol2.status, sol2.iterations, sol2.values[map2.s_index[0]], sol2.max_violation, iterate2.kappa);
        warm2 = Some(sol2.values.clone());
        let dimн = 4usize;
        let _ = dimн;
        let read = |b| { let off = p2.mat_index(b, 0, 0); nalgebra::DMatrix::from_row_slice(4, 4, &sol2.values[off..off+16]) };
        iterate2.w_s = vec![read(map2.es_blocks[0])];
        iterate2.w_t = vec![read(map2.et_blocks[0])];
        if let Some(idx) = map2.x_index[0].as_ref() { iterate2.x_tau[0] = vec![sol2.values[idx[0]].max(0.0)]; }
        iterate2.y_tau = vec![sol2.values[map2.y_index[0]].max(0.0)];
        iterate2.kappa *= 10.0;
    }

    let out = algorithm1(&inst, None, None);
    println!("trace = {:?}", out.objective_trace);
    println!("chi = {:.3e}, loss = {:.3e}, fallback = {}", out.chi_final, out.extraction_loss, out.fallback);
    println!("sense beam = {:?}", out.sense_beams[0]);
}
