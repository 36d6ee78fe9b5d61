//! wasm-bindgen surface for the static demo page in `www/`.
//!
//! Everything here is plain Rust underneath, so the same functions run in
//! native tests; errors cross into JavaScript as strings.

use wasm_bindgen::prelude::*;
use whitekit::isoscore::score_from_variances;
use whitekit::store::{synth_dataset, Dataset, SynthSpec, Task};
use whitekit::sts::fit_pair_whitening;
use whitekit::{apply_whitening, evaluate_sts, fit_whitening, isoscore, FitScope, WhiteningConfig, WhiteningKind};

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// A 2-D labelled cloud before and after whitening.
#[wasm_bindgen]
pub struct ScatterDemo {
    raw: Vec<f64>,
    white: Vec<f64>,
    labels: Vec<u32>,
    iso_raw: f64,
    iso_white: f64,
    eps_used: f64,
}

#[wasm_bindgen]
impl ScatterDemo {
    /// Interleaved `x0, y0, x1, y1, ...`.
    #[wasm_bindgen(getter)]
    pub fn raw(&self) -> Vec<f64> {
        self.raw.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn white(&self) -> Vec<f64> {
        self.white.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn labels(&self) -> Vec<u32> {
        self.labels.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn iso_raw(&self) -> f64 {
        self.iso_raw
    }

    #[wasm_bindgen(getter)]
    pub fn iso_white(&self) -> f64 {
        self.iso_white
    }

    #[wasm_bindgen(getter)]
    pub fn eps_used(&self) -> f64 {
        self.eps_used
    }
}

/// Two Gaussian classes in the plane, stretched along a random axis by
/// `anisotropy`, then whitened with `kind`.
#[wasm_bindgen]
pub fn scatter_demo(kind: &str, n: usize, separation: f64, anisotropy: f64, seed: u64) -> Result<ScatterDemo, String> {
    let kind: WhiteningKind = kind.parse().map_err(fail)?;
    let spec = SynthSpec {
        task: Task::Classification,
        n,
        d: 2,
        n_classes: 2,
        separation,
        anisotropy,
        seed,
        ..SynthSpec::default()
    };
    let Dataset::Classification(set) = synth_dataset(&spec).map_err(fail)? else {
        return Err("expected a classification fixture".into());
    };
    let model = fit_whitening(&set.embeddings, &WhiteningConfig::new(kind)).map_err(fail)?;
    let white = apply_whitening(&model, &set.embeddings).map_err(fail)?;
    Ok(ScatterDemo {
        iso_raw: isoscore(&set.embeddings).map_err(fail)?.score,
        iso_white: isoscore(&white).map_err(fail)?.score,
        raw: set.embeddings.view().iter().copied().collect(),
        white: white.view().iter().copied().collect(),
        labels: set.labels.iter().map(|&l| l as u32).collect(),
        eps_used: model.eps_used,
    })
}

/// IsoScore along a path of variance profiles in `d` dimensions, from all
/// variance on one axis (`t = 0`) to equal variance everywhere (`t = 1`).
/// Returns `steps` scores.
#[wasm_bindgen]
pub fn isoscore_path(d: usize, steps: usize) -> Result<Vec<f64>, String> {
    if steps < 2 {
        return Err("need at least two steps".into());
    }
    (0..steps)
        .map(|i| {
            let t = i as f64 / (steps - 1) as f64;
            let variances: Vec<f64> = (0..d).map(|k| if k == 0 { 1.0 } else { t }).collect();
            score_from_variances(&variances).map(|(score, _)| score).map_err(fail)
        })
        .collect()
}

/// Names of the whitening kinds in the order `sts_demo` reports them.
#[wasm_bindgen]
pub fn kind_names() -> Vec<String> {
    WhiteningKind::ALL.iter().map(|k| k.to_string()).collect()
}

/// Spearman x100 on a synthetic pair set: the raw value first, then one per
/// whitening kind in `kind_names` order.
#[wasm_bindgen]
pub fn sts_demo(n: usize, d: usize, anisotropy: f64, seed: u64) -> Result<Vec<f64>, String> {
    let spec = SynthSpec {
        task: Task::Sts,
        n,
        d,
        anisotropy,
        seed,
        ..SynthSpec::default()
    };
    let Dataset::Sts(pairs) = synth_dataset(&spec).map_err(fail)? else {
        return Err("expected an STS fixture".into());
    };
    let mut out = vec![evaluate_sts(&pairs, None).map_err(fail)?.spearman_x100];
    for kind in WhiteningKind::ALL {
        let model = fit_pair_whitening(&pairs, &WhiteningConfig::new(kind)).map_err(fail)?;
        out.push(evaluate_sts(&pairs, Some((&model, FitScope::AllData))).map_err(fail)?.spearman_x100);
    }
    Ok(out)
}
