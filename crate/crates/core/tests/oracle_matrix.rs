use eigencoupler::chain::{InitialLaw, Scaling, Shape};
use eigencoupler::oracle::{check_conditional_law, check_y_marginal, mean_exit_times_chain};
use eigencoupler::pipeline::{ChainChoice, Pipeline, PipelineOptions};

const TIMES: [f64; 3] = [0.1, 1.0, 10.0];

fn check(name: &str, eps: f64, opts: &PipelineOptions) {
    let pl = Pipeline::preset(name, eps, 200, opts).unwrap();
    let b = pl.joint_generator().unwrap();
    let p = pl.spec.p.clone();
    let cond = check_conditional_law(&b, &pl.model, &p, &TIMES).unwrap();
    assert!(cond.max_tv <= 1e-8, "{name} eps={eps}: conditional TV {:e}", cond.max_tv);
    assert!(cond.mass_drift <= 1e-10, "{name} eps={eps}: mass drift {:e}", cond.mass_drift);
    let nu0 = pl.model.initial_law(&p);
    let marg = check_y_marginal(&b, &nu0, &pl.spec.q, &p, &TIMES).unwrap();
    assert!(marg.max_l1 <= 1e-8, "{name} eps={eps}: marginal l1 {:e}", marg.max_l1);
}

fn opts(chain: ChainChoice, kappa: f64, scaling: Scaling, initial: InitialLaw) -> PipelineOptions {
    PipelineOptions { chain, kappa, scaling, initial }
}

#[test]
fn double_well_two_state_matrix() {
    for eps in [0.1, 0.15, 0.25] {
        for theta in [0.5, 0.2] {
            for initial in [InitialLaw::Uniform, InitialLaw::Point(0), InitialLaw::Stationary] {
                let o = opts(ChainChoice::Synthesized(Shape::TwoState { theta }), 0.9, Scaling::Budget, initial);
                check("double_well", eps, &o);
            }
        }
    }
}

#[test]
fn maximal_first_mode_scaling() {
    let o = opts(ChainChoice::Synthesized(Shape::TwoState { theta: 0.3 }), 0.99, Scaling::MaximizeFirst, InitialLaw::Point(1));
    check("double_well", 0.1, &o);
}

#[test]
fn tilted_double_well() {
    for eps in [0.1, 0.2] {
        let o = opts(ChainChoice::Synthesized(Shape::TwoState { theta: 0.5 }), 0.9, Scaling::Budget, InitialLaw::Uniform);
        check("tilted_double_well", eps, &o);
    }
}

#[test]
fn triple_well_birth_death() {
    for eps in [0.15, 0.25] {
        let o = opts(ChainChoice::WellMasses, 0.9, Scaling::Budget, InitialLaw::Uniform);
        check("triple_well", eps, &o);
        let o = opts(ChainChoice::WellMasses, 0.5, Scaling::Budget, InitialLaw::Point(1));
        check("triple_well", eps, &o);
    }
}

#[test]
fn two_state_mean_transition_time() {
    let pl = Pipeline::preset("double_well", 0.15, 200, &PipelineOptions::default()).unwrap();
    let q = &pl.spec.q;
    let t01 = mean_exit_times_chain(q, &[false, true]).unwrap()[0];
    assert!((t01 - 1.0 / q[0][1]).abs() <= 1e-12 * t01);
}
