use std::fmt::Write as _;
use std::io::{self, Write};

use super::{BatchSummary, Experiment, RunTrace};

/// `turn,cumulative_regret,epoch,phase`, one row per checkpoint.
pub fn write_trace_csv<W: Write>(trace: &RunTrace, mut out: W) -> io::Result<()> {
    writeln!(out, "turn,cumulative_regret,epoch,phase")?;
    for c in &trace.checkpoints {
        writeln!(
            out,
            "{},{},{},{}",
            c.turn, c.cumulative_regret, c.epoch, c.phase
        )?;
    }
    out.flush()
}

/// `turn,mean_regret,std_regret`, one row per checkpoint.
pub fn write_summary_csv<W: Write>(summary: &BatchSummary, mut out: W) -> io::Result<()> {
    writeln!(out, "turn,mean_regret,std_regret")?;
    for ((turn, mean), std) in summary
        .turns
        .iter()
        .zip(&summary.mean_regret)
        .zip(&summary.std_regret)
    {
        writeln!(out, "{turn},{mean},{std}")?;
    }
    out.flush()
}

/// Per-epoch diagnostics of one run. Arms are printed 1-based.
pub fn write_epochs_csv<W: Write>(trace: &RunTrace, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "epoch,gamma,success,k_star,exploit_optimal,exploit_profile,regret_at_end,complete"
    )?;
    for e in &trace.epochs {
        let profile: Vec<String> = e
            .exploit_profile
            .iter()
            .map(|a| (a + 1).to_string())
            .collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.epoch,
            e.gamma,
            u8::from(e.success),
            e.exploit_epoch,
            u8::from(e.exploit_optimal),
            profile.join(" "),
            e.regret_at_end,
            u8::from(e.complete)
        )?;
    }
    out.flush()
}

/// The run manifest: resolved configuration, seeds, ground truth and results.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(exp: &Experiment) -> Self {
        let mut m = Self {
            entries: Vec::new(),
        };
        m.push(
            "software",
            concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")),
        );
        let c = &exp.config;
        m.push("matrix", &c.matrix);
        m.push("players", exp.matrix.n_players());
        m.push("arms", exp.matrix.n_arms());
        m.push("noise", c.noise);
        m.push("c1", c.c1);
        m.push("c2", c.c2);
        m.push("c3", c.c3);
        m.push("ci_scale", c.ci_scale);
        m.push("epsilon_scale", c.epsilon_scale);
        m.push("warm_start", c.warm_start);
        m.push("use_collision_bit", c.use_collision_bit);
        m.push("reset_min_period", c.reset_min_period);
        m.push("horizon", c.horizon);
        m.push("stride", c.stride);
        m.push("master_seed", c.seed);
        m.push("gamma_star", exp.gamma_star);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

pub fn write_manifest<W: Write>(manifest: &Manifest, mut out: W) -> io::Result<()> {
    out.write_all(manifest.render().as_bytes())?;
    out.flush()
}
