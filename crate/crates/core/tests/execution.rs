use daal::harness::{prepare, run_prepared, ALConfig, RunOptions};
use daal::par::Execution;

#[test]
fn sequential_and_parallel_runs_agree() {
    let mut config = ALConfig::toy();
    config.num_cycles = 4;
    let run = |execution| {
        let prep = prepare(&config, 5, execution).unwrap();
        let opts = RunOptions {
            execution,
            score_dump: true,
            latent_trace: false,
        };
        (
            prep.pool_q.clone(),
            run_prepared(&config, &prep, 5, &opts)
                .unwrap()
                .without_timing(),
        )
    };
    let (q_seq, seq) = run(Execution::Sequential);
    let (q_par, par) = run(Execution::Parallel);
    assert_eq!(q_seq, q_par);
    assert_eq!(seq, par);
}
