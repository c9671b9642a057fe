//! `metrics`: partition agreement report between an estimate and a truth
//! membership file.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Result};
use spanclust::posterior::{adjusted_rand_index, label_accuracy, normalized_information_distance};

use crate::ingest::read_membership;

pub fn run(estimate_path: &Path, truth_path: &Path, out: Option<&Path>) -> Result<()> {
    let estimate = read_membership(estimate_path)?;
    let truth = read_membership(truth_path)?;
    if estimate.len() != truth.len() {
        bail!(
            "region sets differ: {} regions in estimate, {} in truth",
            estimate.len(),
            truth.len()
        );
    }
    let truth_map: HashMap<&str, u32> = truth.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    let mut est_labels = Vec::with_capacity(estimate.len());
    let mut true_labels = Vec::with_capacity(estimate.len());
    for (id, label) in &estimate {
        let Some(&t) = truth_map.get(id.as_str()) else {
            bail!("region '{id}' missing from the truth file");
        };
        est_labels.push(*label);
        true_labels.push(t);
    }

    let r = adjusted_rand_index(&est_labels, &true_labels)?;
    let nid = normalized_information_distance(&est_labels, &true_labels)?;
    let accuracy = label_accuracy(&est_labels, &true_labels)?;
    let report = format!(
        "ari={}\nri={}\nnid={}\naccuracy={}\n",
        r.ari, r.ri, nid, accuracy
    );
    print!("{report}");
    if let Some(path) = out {
        std::fs::write(path, report)?;
    }
    Ok(())
}
