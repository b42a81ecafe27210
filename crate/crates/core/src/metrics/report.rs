use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{absolute_linearity, relative_linearity, PerceptualDistance, Trajectory};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemMetrics {
    pub index: usize,
    pub al: Option<f64>,
    pub rg: f64,
    pub rl: Option<f64>,
    pub sm: f64,
}

pub fn evaluate_trajectory(index: usize, traj: &Trajectory, d: &dyn PerceptualDistance) -> Result<ItemMetrics> {
    let a = absolute_linearity(traj, d)?;
    let r = relative_linearity(traj, d)?;
    Ok(ItemMetrics {
        index,
        al: a.al,
        rg: a.rg,
        rl: r.rl,
        sm: r.sm,
    })
}

/// Per-image AL/Rg/RL/Sm and their means. Undefined values are skipped in
/// the means and written as empty CSV cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub distance: String,
    pub items: Vec<ItemMetrics>,
    pub mean: ItemMetricsMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemMetricsMean {
    pub al: Option<f64>,
    pub rg: f64,
    pub rl: Option<f64>,
    pub sm: f64,
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = v.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

impl EvalReport {
    pub fn new(distance: &str, items: Vec<ItemMetrics>) -> Self {
        let n = items.len().max(1) as f64;
        let mean = ItemMetricsMean {
            al: mean_opt(items.iter().map(|i| i.al)),
            rg: items.iter().map(|i| i.rg).sum::<f64>() / n,
            rl: mean_opt(items.iter().map(|i| i.rl)),
            sm: items.iter().map(|i| i.sm).sum::<f64>() / n,
        };
        EvalReport {
            distance: distance.to_string(),
            items,
            mean,
        }
    }

    pub fn from_trajectories(trajs: &[Trajectory], d: &dyn PerceptualDistance) -> Result<Self> {
        let items = trajs
            .iter()
            .enumerate()
            .map(|(i, t)| evaluate_trajectory(i, t, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(d.name(), items))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["image", "AL", "Rg", "RL", "Sm"]).map_err(err)?;
        for i in &self.items {
            w.write_record([i.index.to_string(), cell(i.al), i.rg.to_string(), cell(i.rl), i.sm.to_string()])
                .map_err(err)?;
        }
        let m = &self.mean;
        w.write_record(["mean".to_string(), cell(m.al), m.rg.to_string(), cell(m.rl), m.sm.to_string()])
            .map_err(err)?;
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.to_csv()?)?;
        std::fs::write(json_path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}
