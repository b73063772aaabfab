//! Batch evaluation of a policy over a scenario set.

use std::io::Write;

use grain_core::terrain::Scenario;
use grain_planning::{run_episode, CostWeights, PlanContext, Planner, Policy, SimEnv, Termination};
use grain_surrogate::Predictor;

use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub scenario_id: usize,
    pub termination: Termination,
    /// Obstacle error where obstacles have goals, else robot error, cm.
    pub mae: f64,
    pub robot_error: Option<f64>,
    pub obstacle_error: Option<f64>,
    pub steps: usize,
}

impl TrialResult {
    pub fn succeeded(&self) -> bool {
        self.termination == Termination::Success
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    /// Sorted by scenario id.
    pub trials: Vec<TrialResult>,
    /// Scenarios rejected before running, with the reason.
    pub excluded: Vec<(usize, String)>,
    pub mean_mae: f64,
    pub std_mae: f64,
    /// Percent of run trials that succeeded.
    pub success_rate: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl EvalReport {
    pub fn from_trials(mut trials: Vec<TrialResult>, excluded: Vec<(usize, String)>) -> Self {
        trials.sort_by_key(|t| t.scenario_id);
        let maes: Vec<f64> = trials.iter().map(|t| t.mae).collect();
        let (mean_mae, std_mae) = mean_std(&maes);
        let success_rate = if trials.is_empty() {
            0.0
        } else {
            100.0 * trials.iter().filter(|t| t.succeeded()).count() as f64 / trials.len() as f64
        };
        Self {
            trials,
            excluded,
            mean_mae,
            std_mae,
            success_rate,
        }
    }

    pub fn successes(&self) -> usize {
        self.trials.iter().filter(|t| t.succeeded()).count()
    }

    /// Mean and std of the final robot-to-target distance over trials that have one.
    pub fn robot_error(&self) -> Option<(f64, f64)> {
        let v: Vec<f64> = self.trials.iter().filter_map(|t| t.robot_error).collect();
        (!v.is_empty()).then(|| mean_std(&v))
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "scenario_id,termination,success,mae,robot_error,obstacle_error,steps"
        )?;
        for t in &self.trials {
            writeln!(
                out,
                "{},{},{},{:.6},{},{},{}",
                t.scenario_id,
                t.termination,
                t.succeeded() as u8,
                t.mae,
                opt(t.robot_error),
                opt(t.obstacle_error),
                t.steps
            )?;
        }
        Ok(())
    }

    /// Table-style summary: `MAE (cm)` as mean(± std) and `Success (%)`.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "trials {}  MAE (cm) {:.2}(± {:.2})  Success (%) {:.0}",
            self.trials.len(),
            self.mean_mae,
            self.std_mae,
            self.success_rate
        );
        if let Some((m, sd)) = self.robot_error() {
            s.push_str(&format!("  robot error (cm) {m:.2}(± {sd:.2})"));
        }
        if !self.excluded.is_empty() {
            s.push_str(&format!("  excluded {}", self.excluded.len()));
        }
        s
    }
}

/// Runs `make_policy(id)` on every scenario. Scenarios that fail validation
/// are listed as excluded instead of aborting the batch.
pub fn evaluate_with<'p>(
    env: SimEnv,
    scenarios: &'p [(usize, Scenario)],
    weights: &CostWeights,
    mut make_policy: impl FnMut(usize, &'p Scenario) -> Box<dyn Policy + 'p>,
) -> Result<EvalReport> {
    if scenarios.is_empty() {
        return Err(HarnessError::Invalid("empty scenario set".into()));
    }
    weights.validate()?;
    let mut trials = Vec::new();
    let mut excluded = Vec::new();
    for (id, s) in scenarios {
        if let Err(e) = s.validate() {
            excluded.push((*id, e.to_string()));
            continue;
        }
        let mut policy = make_policy(*id, s);
        let trace = run_episode(env.clone(), policy.as_mut(), s, weights)?;
        trials.push(TrialResult {
            scenario_id: *id,
            termination: trace.termination,
            mae: trace.mae(),
            robot_error: trace.robot_error,
            obstacle_error: trace.obstacle_error,
            steps: trace.records.len(),
        });
    }
    Ok(EvalReport::from_trials(trials, excluded))
}

/// Receding-horizon planning with `predictor` on every scenario.
pub fn evaluate<'a>(
    env: SimEnv<'a>,
    scenarios: &'a [(usize, Scenario)],
    predictor: &'a dyn Predictor,
    weights: &'a CostWeights,
    use_eaa: bool,
) -> Result<EvalReport> {
    let geom = env.geom;
    evaluate_with(env.clone(), scenarios, weights, |_, s| {
        Box::new(Planner {
            ctx: PlanContext {
                predictor,
                scenario: s,
                weights,
                geom,
                use_eaa,
            },
        })
    })
}
