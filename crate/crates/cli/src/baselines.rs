//! Published results of competing methods, used only as reference rows in
//! result tables. Each entry names the method's own publication.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub dataset: &'static str,
    pub method: &'static str,
    pub task: usize,
    pub a_y: f64,
    /// `None` where no adversary accuracy was published.
    pub a_s: Option<f64>,
    pub citation: &'static str,
}

const NN_MMD: &str = "Li, Swersky, Zemel. Learning unbiased features. arXiv:1412.5244, 2014";
const VFAE: &str = "Louizos et al. The variational fair autoencoder. ICLR 2016";
const CAI: &str = "Xie et al. Controllable invariance through adversarial feature learning. NeurIPS 2017";
const CVIB: &str = "Moyer et al. Invariant representations without adversarial training. NeurIPS 2018";
const UAI: &str = "Jaiswal et al. Unsupervised adversarial invariance. NeurIPS 2018";
const NO_ADVERSARY: &str = "multi-task predictor on z without forget-gates or discriminators, dSprites";

macro_rules! b {
    ($ds:expr, $m:expr, $t:expr, $ay:expr, $as:expr, $c:expr) => {
        Baseline {
            dataset: $ds,
            method: $m,
            task: $t,
            a_y: $ay,
            a_s: $as,
            citation: $c,
        }
    };
}

pub const BASELINES: &[Baseline] = &[
    b!("adult", "NN+MMD", 0, 0.75, Some(0.67), NN_MMD),
    b!("adult", "VFAE", 0, 0.76, Some(0.67), VFAE),
    b!("adult", "CAI", 0, 0.83, Some(0.89), CAI),
    b!("adult", "CVIB", 0, 0.69, Some(0.68), CVIB),
    b!("german", "NN+MMD", 0, 0.74, Some(0.80), NN_MMD),
    b!("german", "VFAE", 0, 0.70, Some(0.80), VFAE),
    b!("german", "CAI", 0, 0.70, Some(0.81), CAI),
    b!("german", "CVIB", 0, 0.74, Some(0.80), CVIB),
    b!("mnist-rot", "NN+MMD", 0, 0.970, Some(0.380), NN_MMD),
    b!("mnist-rot", "VFAE", 0, 0.953, Some(0.389), VFAE),
    b!("mnist-rot", "CAI", 0, 0.958, Some(0.384), CAI),
    b!("mnist-rot", "CVIB", 0, 0.960, Some(0.382), CVIB),
    b!("mnist-rot", "UAI", 0, 0.977, Some(0.338), UAI),
    b!("shapes", "Baseline", 0, 0.99, Some(0.94), NO_ADVERSARY),
    b!("shapes", "Baseline", 1, 0.99, Some(0.40), NO_ADVERSARY),
];

/// Method used for the relative-improvement row, per dataset.
pub fn default_delta_method(dataset: &str) -> Option<&'static str> {
    match dataset {
        "adult" => Some("VFAE"),
        "german" => Some("CVIB"),
        "mnist-rot" => Some("UAI"),
        "shapes" => Some("Baseline"),
        _ => None,
    }
}

pub fn for_dataset(dataset: &str) -> Vec<Baseline> {
    BASELINES.iter().filter(|b| b.dataset == dataset).copied().collect()
}
