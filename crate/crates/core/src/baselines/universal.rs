use rand::Rng;
use rand_distr::Exp1;

/// Monte-Carlo universal portfolio: constant-rebalanced portfolios drawn
/// uniformly from the simplex, each weighted by the wealth it would have
/// accumulated so far.
#[derive(Debug, Clone)]
pub struct UniversalPortfolio {
    assets: usize,
    /// Sampled portfolios, row-major `samples x assets`.
    portfolios: Vec<f64>,
    log_wealth: Vec<f64>,
}

impl UniversalPortfolio {
    pub fn new(assets: usize, samples: usize, rng: &mut impl Rng) -> Self {
        let mut portfolios = Vec::with_capacity(samples * assets);
        for _ in 0..samples {
            // normalised unit exponentials are Dirichlet(1, ..., 1)
            let e: Vec<f64> = (0..assets).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let s: f64 = e.iter().sum();
            portfolios.extend(e.iter().map(|v| v / s));
        }
        Self { assets, portfolios, log_wealth: vec![0.0; samples] }
    }

    pub fn samples(&self) -> usize {
        self.log_wealth.len()
    }

    /// Grow every sampled portfolio by one day of price relatives.
    pub fn observe(&mut self, relatives: &[f64]) {
        for (b, lw) in self.portfolios.chunks_exact(self.assets).zip(&mut self.log_wealth) {
            *lw += b.iter().zip(relatives).map(|(w, x)| w * x).sum::<f64>().ln();
        }
    }

    /// Wealth-weighted mean of the sampled portfolios.
    pub fn weights(&self) -> Vec<f64> {
        let top = self.log_wealth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut acc = vec![0.0; self.assets];
        for (b, lw) in self.portfolios.chunks_exact(self.assets).zip(&self.log_wealth) {
            let k = (lw - top).exp();
            for (a, w) in acc.iter_mut().zip(b) {
                *a += k * w;
            }
        }
        let s: f64 = acc.iter().sum();
        acc.iter().map(|a| a / s).collect()
    }
}

/// One-shot universal portfolio over a history of price relatives.
pub fn up_weights(assets: usize, history: &[Vec<f64>], samples: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut up = UniversalPortfolio::new(assets, samples, rng);
    for x in history {
        up.observe(x);
    }
    up.weights()
}
