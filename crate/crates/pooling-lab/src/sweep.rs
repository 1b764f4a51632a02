//! Parallel sweep execution.
//!
//! Tasks fan out across a fixed-size thread pool; outputs are collected in
//! task order, so the aggregate is independent of scheduling and thread
//! count.

use anyhow::Result;
use rayon::prelude::*;

use pooling_core::metrics::{SweepPlan, SweepReport, TaskOutput};

pub fn run_parallel(plan: &SweepPlan, jobs: usize) -> Result<SweepReport> {
    let tasks = plan.tasks();
    let outputs: Vec<TaskOutput> = if jobs <= 1 {
        tasks
            .iter()
            .map(|t| plan.run_task(t))
            .collect::<pooling_core::Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
        pool.install(|| {
            tasks
                .par_iter()
                .map(|t| plan.run_task(t))
                .collect::<pooling_core::Result<Vec<_>>>()
        })?
    };
    Ok(plan.aggregate(&outputs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pooling_core::metrics::{CellParam, GeneratorSpec, PolicySpec, SweepConfig};

    #[test]
    fn thread_count_does_not_change_the_report() {
        let config = SweepConfig {
            generator: GeneratorSpec::Uniform1d,
            topology: None,
            n: 30,
            cells: vec![CellParam::Density(3), CellParam::Density(6)],
            base_seed: 11,
            seeds: 8,
            policies: vec![
                PolicySpec::Pb,
                PolicySpec::Gre,
                PolicySpec::Rbat { gamma: None },
            ],
            include_opt: true,
        };
        let plan = pooling_core::metrics::prepare_sweep(config).unwrap();
        let serial = run_parallel(&plan, 1).unwrap();
        let parallel = run_parallel(&plan, 8).unwrap();
        assert_eq!(serial, parallel);
    }
}
