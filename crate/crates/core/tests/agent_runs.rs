use sdq_core::agents::{run_episode, AgentKind, AgentState, Exploration, Init, Rollout, RunStreams, Schedule, StepSize};
use sdq_core::envs::{make_bias_mdp, make_named_env, make_stochastic_grid, Env, BIAS_B, MAX_EPISODE_STEPS};
use sdq_core::mdp::{q_max_bound, random_q};
use sdq_core::rng::{stream, Purpose};

fn builtin_envs() -> Vec<Env<f64>> {
    vec![
        make_bias_mdp(0.9, 10, -0.1, 1.0).unwrap(),
        make_stochastic_grid(8, (-10.0, 2.0), 20.0, 0.95).unwrap(),
        make_named_env("cliffwalk", 0.99).unwrap(),
        make_named_env("frozenlake_det", 0.99).unwrap(),
    ]
}

#[test]
fn sdq_with_equal_start_tables_is_q_learning_bitwise() {
    let schedules = [
        Schedule::constant(0.1, 0.1).unwrap(),
        Schedule::new(Exploration::InverseSqrtStateVisits, StepSize::InverseSaVisits).unwrap(),
    ];
    for env in builtin_envs() {
        for sched in &schedules {
            let mut init = stream(3, 0, Purpose::Init);
            let q0 = random_q::<f64, _>(env.mdp().layout().clone(), -0.3, 0.3, &mut init);
            let gamma = env.mdp().gamma();
            let mut q = AgentState::new(AgentKind::Q, q0.clone(), None, gamma).unwrap();
            let mut sdq = AgentState::new(AgentKind::Sdq, q0.clone(), Some(q0), gamma).unwrap();
            let (mut s1, mut s2) = (RunStreams::new(3, 0), RunStreams::new(3, 0));
            let (mut r1, mut r2) = (Rollout::new(&env), Rollout::new(&env));
            for _ in 0..10_000 {
                let (t1, _) = r1.step(&mut q, &env, sched, &mut s1);
                let (t2, _) = r2.step(&mut sdq, &env, sched, &mut s2);
                assert_eq!(t1, t2);
            }
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(q.qa().values()), bits(sdq.qa().values()), "{}", env.id());
            assert_eq!(bits(q.qa().values()), bits(sdq.qb().unwrap().values()), "{}", env.id());
        }
    }
}

#[test]
fn iterates_stay_within_q_max() {
    // rewards rescaled to |r| <= 1 and |Q0| <= 1; α < 1 keeps every iterate in the box
    for env in builtin_envs() {
        let (env, _) = env.with_unit_rewards();
        let gamma = env.mdp().gamma();
        let sched = Schedule::constant(0.2, 0.3).unwrap();
        for kind in [AgentKind::Q, AgentKind::DoubleQ, AgentKind::Sdq] {
            let mut streams = RunStreams::new(11, 0);
            let init = Init::Uniform { lo: -1.0, hi: 1.0 };
            let mut agent =
                AgentState::initialise(kind, env.mdp().layout().clone(), init, gamma, &mut streams.init).unwrap();
            let bound = q_max_bound(1.0, agent.max_abs(), gamma);
            let mut rollout = Rollout::new(&env);
            for _ in 0..5_000 {
                // Gaussian rewards are unbounded, so the check is only meaningful without them
                let (t, _) = rollout.step(&mut agent, &env, &sched, &mut streams);
                if env.id() != "bias" {
                    assert!(t.r.abs() <= 1.0);
                    assert!(agent.max_abs() <= bound, "{} {kind:?}", env.id());
                }
            }
        }
    }
}

#[test]
fn single_b_action_removes_the_bias() {
    // with one action at B there is nothing to maximise over, so the 1/n
    // estimate of Q(B) is just a running mean of the rewards seen there
    let env = make_bias_mdp(0.9, 1, -0.1, 1.0).unwrap();
    let sched = Schedule::new(Exploration::Constant(0.5), StepSize::InverseSaVisits).unwrap();
    let mut streams = RunStreams::new(21, 0);
    let mut agent = AgentState::initialise(AgentKind::Q, env.mdp().layout().clone(), Init::Zero, 0.9, &mut streams.init)
        .unwrap();
    for _ in 0..100_000 {
        run_episode(&mut agent, &env, &sched, &mut streams, MAX_EPISODE_STEPS);
    }
    let visits = agent.counts().n_a[env.mdp().layout().index(BIAS_B, 0)];
    let est: f64 = agent.qa().get(BIAS_B, 0);
    assert!(visits > 10_000);
    assert!((est + 0.1).abs() <= 0.02, "Q(B) = {est} after {visits} visits");
}
