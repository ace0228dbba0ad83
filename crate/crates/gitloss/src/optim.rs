//! Parameter update rules: SGD with momentum and Adam, plus a step-decay
//! learning-rate schedule.
//!
//! Optimizers own their state (velocity or moment estimates), keyed to the
//! parameter list order. Class centers are not parameters from the
//! optimizer's point of view; they are maintained separately by
//! [`crate::loss::CenterBank::update_centers`].

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Parameter(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// SGD with classical momentum: `v <- momentum * v + g; theta <- theta - lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub cfg: SgdConfig,
    velocity: Vec<Matrix>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig, shapes: &[(usize, usize)]) -> Result<Self> {
        cfg.validate()?;
        Ok(Sgd {
            cfg,
            velocity: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        })
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
        check_step_shapes(params, grads, &self.velocity)?;
        for ((param, grad), vel) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            let p = param.as_mut_slice();
            let g = grad.as_slice();
            let v = vel.as_mut_slice();
            for i in 0..p.len() {
                v[i] = self.cfg.momentum * v[i] + g[i];
                p[i] -= self.cfg.lr * v[i];
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Parameter(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Parameter(format!(
                "betas must be in [0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Parameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with the standard bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
    step_count: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, shapes: &[(usize, usize)]) -> Result<Self> {
        cfg.validate()?;
        let zeros = || -> Vec<Matrix> { shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect() };
        Ok(Adam {
            cfg,
            first_moment: zeros(),
            second_moment: zeros(),
            step_count: 0,
        })
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
        check_step_shapes(params, grads, &self.first_moment)?;
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.cfg.beta1.powi(t);
        let bias2 = 1.0 - self.cfg.beta2.powi(t);
        for (((param, grad), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let p = param.as_mut_slice();
            let g = grad.as_slice();
            let m = m.as_mut_slice();
            let v = v.as_mut_slice();
            for i in 0..p.len() {
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g[i];
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
            }
        }
        Ok(())
    }

    /// Serializes the full state (config, step counter, moments) so training
    /// can resume with bit-identical behavior.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"ADAM");
        out.extend_from_slice(&1u32.to_le_bytes());
        for field in [self.cfg.lr, self.cfg.beta1, self.cfg.beta2, self.cfg.epsilon] {
            out.extend_from_slice(&field.to_le_bytes());
        }
        out.extend_from_slice(&self.step_count.to_le_bytes());
        out.extend_from_slice(&(self.first_moment.len() as u32).to_le_bytes());
        for moments in [&self.first_moment, &self.second_moment] {
            for m in moments {
                out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
                out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
                for &x in m.as_slice() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Adam> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(4)?;
        if magic != b"ADAM" {
            return Err(Error::Parameter("not an Adam state blob".into()));
        }
        let version = cursor.u32()?;
        if version != 1 {
            return Err(Error::Parameter(format!(
                "unsupported Adam state version {version}"
            )));
        }
        let cfg = AdamConfig {
            lr: cursor.f64()?,
            beta1: cursor.f64()?,
            beta2: cursor.f64()?,
            epsilon: cursor.f64()?,
        };
        let step_count = cursor.u64()?;
        let count = cursor.u32()? as usize;
        let read_moments = |cursor: &mut Cursor| -> Result<Vec<Matrix>> {
            (0..count)
                .map(|_| {
                    let rows = cursor.u32()? as usize;
                    let cols = cursor.u32()? as usize;
                    let mut m = Matrix::zeros(rows.max(1), cols.max(1));
                    if rows == 0 || cols == 0 {
                        return Err(Error::Parameter("empty moment shape".into()));
                    }
                    for i in 0..rows * cols {
                        m.as_mut_slice()[i] = cursor.f64()?;
                    }
                    Ok(m)
                })
                .collect()
        };
        let first_moment = read_moments(&mut cursor)?;
        let second_moment = read_moments(&mut cursor)?;
        Ok(Adam {
            cfg,
            first_moment,
            second_moment,
            step_count,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parameter("truncated Adam state blob".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn check_step_shapes(
    params: &[&mut Matrix],
    grads: &[&Matrix],
    state: &[Matrix],
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::Parameter(format!(
            "optimizer got {} params, {} grads, {} state tensors",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    for ((p, g), s) in params.iter().zip(grads).zip(state) {
        if p.shape() != g.shape() {
            return Err(Error::dimension("optimizer step", p.shape(), g.shape()));
        }
        if p.shape() != s.shape() {
            return Err(Error::dimension("optimizer state", p.shape(), s.shape()));
        }
    }
    Ok(())
}

/// Either update rule behind one interface, for the training loop.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
        match self {
            Optimizer::Sgd(o) => o.step(params, grads),
            Optimizer::Adam(o) => o.step(params, grads),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        match self {
            Optimizer::Sgd(o) => o.set_lr(lr),
            Optimizer::Adam(o) => o.set_lr(lr),
        }
    }
}

/// Step decay: the initial rate is divided by `factor` once per decay epoch
/// that has passed.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub factor: f64,
    pub decay_epochs: Vec<usize>,
}

impl LrSchedule {
    pub fn constant(initial: f64) -> Self {
        LrSchedule {
            initial,
            factor: 10.0,
            decay_epochs: Vec::new(),
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.initial / self.factor.powi(decays as i32)
    }
}
