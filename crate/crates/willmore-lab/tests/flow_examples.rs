use willmore_lab::diskgrid::Grid;
use willmore_lab::flow::{self, FlowOptions, FlowState, StopReason};
use willmore_lab::immersion::{self, Surface};

fn ps(s: Surface, n: usize) -> f64 {
    let p = immersion::make_surface(&s, 3, Grid::new(0.4, n).unwrap()).unwrap();
    FlowState::new(&p).unwrap().ps_norm
}

#[test]
fn ps_norm_examples() {
    assert_eq!(ps(Surface::Plane, 33), 0.0);
    let (c, f) = (ps(Surface::Sphere { rho: 1.0 }, 65), ps(Surface::Sphere { rho: 1.0 }, 129));
    assert!((3.4..=4.6).contains(&(c / f)), "ratio {}", c / f);
    let g = ps(Surface::GraphPerturbation { seed: 1, amplitude: 0.05 }, 65);
    assert!(g > 10.0 * c, "{g} vs {c}");
}

#[test]
fn ps_norm_floor_is_below_default_threshold_on_sphere() {
    for n in [65, 129] {
        let g = Grid::new(0.4, n).unwrap();
        assert!(ps(Surface::Sphere { rho: 1.0 }, n) < flow::floor_threshold(&g));
    }
}

#[test]
fn explicit_threshold_and_trace_energy() {
    let p = immersion::make_surface(&Surface::GraphPerturbation { seed: 4, amplitude: 0.05 }, 3, Grid::new(0.4, 33).unwrap())
        .unwrap();
    let t = flow::run(&p, FlowOptions { max_iters: 30, stop: Some(1e9), ..FlowOptions::default() }).unwrap();
    assert_eq!(t.stop, StopReason::Threshold);
    assert_eq!(t.rows.len(), 1);
    let t = flow::run(&p, FlowOptions { max_iters: 30, ..FlowOptions::default() }).unwrap();
    assert!(t.energies_non_increasing());
    assert!(t.rows.iter().skip(1).all(|r| r.tau > 0.0));
    assert!(t.rows.last().unwrap().energy < t.rows[0].energy);
}
