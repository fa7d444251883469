//! Fully connected baseline: the stacked measurement `[Re y; Im y]` goes
//! through leaky-ReLU hidden layers and a linear output layer.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::math::{gaussian_noise, ComplexVector, RngHandle, Scalar};
use crate::params::ParamSet;
use crate::recon::check_batch;
use crate::sampler::{apply_pattern, SamplingPattern, SelectionGrad};

pub const FC_HIDDEN: [usize; 5] = [256, 512, 256, 128, 128];
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct FcParams<T> {
    /// `weights[l]` is `out x in`.
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
    pub slope: T,
}

impl<T: Scalar> FcParams<T> {
    pub fn zeros(input: usize, hidden: &[usize], output: usize) -> Self {
        let dims: Vec<usize> = std::iter::once(input)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(output))
            .collect();
        Self {
            weights: dims.windows(2).map(|w| Array2::zeros((w[1], w[0]))).collect(),
            biases: dims[1..].iter().map(|&d| Array1::zeros(d)).collect(),
            slope: T::lit(LEAKY_SLOPE),
        }
    }

    /// He-normal weights, zero biases.
    pub fn init(input: usize, hidden: &[usize], output: usize, rng: &mut RngHandle) -> Self {
        let mut p = Self::zeros(input, hidden, output);
        for w in &mut p.weights {
            let std = (2.0 / w.ncols() as f64).sqrt();
            let noise = gaussian_noise(w.len(), std, rng);
            *w = Array2::from_shape_vec(w.raw_dim(), noise).expect("same shape");
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("at least one layer").nrows()
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.weights[..self.weights.len() - 1].iter().map(|w| w.nrows()).collect()
    }

    fn validate(&self) -> Result<()> {
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if b.len() != w.nrows() {
                return Err(Error::Shape(format!("layer {l}: bias {} vs {} outputs", b.len(), w.nrows())));
            }
            if l > 0 && self.weights[l - 1].nrows() != w.ncols() {
                return Err(Error::Shape(format!("layer {l} input does not chain")));
            }
        }
        Ok(())
    }
}

impl<T: Scalar> ParamSet<T> for FcParams<T> {
    fn slices(&self) -> Vec<&[T]> {
        self.weights
            .iter()
            .map(|w| w.as_slice().expect("standard layout"))
            .chain(self.biases.iter().map(|b| b.as_slice().expect("standard layout")))
            .collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        self.weights
            .iter_mut()
            .map(|w| w.as_slice_mut().expect("standard layout"))
            .chain(self.biases.iter_mut().map(|b| b.as_slice_mut().expect("standard layout")))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FcTape<T> {
    spectra: Vec<ComplexVector<T>>,
    patterns: Vec<SamplingPattern>,
    /// Layer inputs: `acts[0]` is the stacked measurement.
    acts: Vec<Array2<T>>,
    /// Pre-activations of every layer.
    pre: Vec<Array2<T>>,
}

impl<T: Scalar> FcTape<T> {
    pub fn output(&self) -> Array2<T> {
        self.pre.last().expect("at least one layer").clone()
    }
}

fn leaky<T: Scalar>(t: T, slope: T) -> T {
    if t > T::zero() {
        t
    } else {
        slope * t
    }
}

pub fn fc_forward_batch<T: Scalar>(
    params: &FcParams<T>,
    patterns: &[SamplingPattern],
    spectra: &[ComplexVector<T>],
) -> Result<(Array2<T>, FcTape<T>)> {
    params.validate()?;
    let n = spectra.first().map_or(0, |x| x.len());
    check_batch(n, patterns, spectra)?;
    let m = patterns.first().map_or(0, |p| p.m());
    if 2 * m != params.input_dim() || patterns.iter().any(|p| p.m() != m) {
        return Err(Error::Shape(format!(
            "network expects {} inputs, patterns give {}",
            params.input_dim(),
            2 * m
        )));
    }
    let mut input = Array2::zeros((2 * m, patterns.len()));
    for (b, (p, x)) in patterns.iter().zip(spectra).enumerate() {
        let y = apply_pattern(p, x)?;
        for j in 0..m {
            input[[j, b]] = y.re[j];
            input[[m + j, b]] = y.im[j];
        }
    }
    let layers = params.weights.len();
    let mut acts = vec![input];
    let mut pre = Vec::with_capacity(layers);
    for (l, (w, bias)) in params.weights.iter().zip(&params.biases).enumerate() {
        let z = w.dot(&acts[l]) + bias.view().insert_axis(Axis(1));
        if l + 1 < layers {
            acts.push(z.mapv(|t| leaky(t, params.slope)));
        }
        pre.push(z);
    }
    let tape = FcTape {
        spectra: spectra.to_vec(),
        patterns: patterns.to_vec(),
        acts,
        pre,
    };
    Ok((tape.output(), tape))
}

pub fn fc_forward<T: Scalar>(
    params: &FcParams<T>,
    pattern: &SamplingPattern,
    x: &ComplexVector<T>,
) -> Result<(Vec<T>, FcTape<T>)> {
    let (out, tape) = fc_forward_batch(params, std::slice::from_ref(pattern), std::slice::from_ref(x))?;
    Ok((out.column(0).to_vec(), tape))
}

pub fn fc_backward<T: Scalar>(
    params: &FcParams<T>,
    tape: &FcTape<T>,
    upstream: ArrayView2<T>,
    with_selection: bool,
) -> Result<(FcParams<T>, Vec<SelectionGrad<T>>)> {
    let out = tape.pre.last().expect("at least one layer");
    if upstream.dim() != out.dim() {
        return Err(Error::Shape(format!(
            "upstream {:?} does not match output {:?}",
            upstream.dim(),
            out.dim()
        )));
    }
    let mut grads = FcParams::zeros(params.input_dim(), &params.hidden(), params.output_dim());
    grads.slope = params.slope;
    let mut g = upstream.to_owned();
    for l in (0..params.weights.len()).rev() {
        if l + 1 < params.weights.len() {
            g.zip_mut_with(&tape.pre[l], |gv, &t| {
                if t <= T::zero() {
                    *gv *= params.slope;
                }
            });
        }
        grads.weights[l] = g.dot(&tape.acts[l].t());
        grads.biases[l] = g.sum_axis(Axis(1));
        if l > 0 || with_selection {
            g = params.weights[l].t().dot(&g);
        }
    }
    let selection = if with_selection {
        tape.patterns
            .iter()
            .zip(&tape.spectra)
            .enumerate()
            .map(|(b, (p, x))| {
                let m = p.m();
                let mut sel = SelectionGrad::new(m, x.len());
                let col = g.column(b);
                sel.push(col.iter().take(m).copied().collect(), x.re.clone());
                sel.push(col.iter().skip(m).copied().collect(), x.im.clone());
                sel
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok((grads, selection))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (SamplingPattern, ComplexVector<f64>) {
        let p = SamplingPattern::new(8, vec![1, 5, 6]).unwrap();
        let mut rng = RngHandle::new(9);
        let x = ComplexVector::new(gaussian_noise(8, 1.0, &mut rng), gaussian_noise(8, 1.0, &mut rng)).unwrap();
        (p, x)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let (p, x) = setup();
        let params = FcParams::<f64>::zeros(6, &[4, 4], 8);
        let (out, _) = fc_forward(&params, &p, &x).unwrap();
        assert_eq!(out, vec![0.0; 8]);
    }

    #[test]
    fn leaky_slope_on_negative_inputs() {
        assert_eq!(leaky(-2.0, 0.2), -0.4);
        assert_eq!(leaky(3.0, 0.2), 3.0);
        // single hidden unit with weight -1 on a positive input
        let p = SamplingPattern::new(2, vec![0]).unwrap();
        let x = ComplexVector::new(vec![1.5, 0.0], vec![0.0, 0.0]).unwrap();
        let mut params = FcParams::<f64>::zeros(2, &[1], 1);
        params.weights[0][[0, 0]] = -1.0;
        params.weights[1][[0, 0]] = 1.0;
        let (out, _) = fc_forward(&params, &p, &x).unwrap();
        assert!((out[0] - LEAKY_SLOPE * -1.5).abs() < 1e-15);
    }

    #[test]
    fn default_widths_chain() {
        let params = FcParams::<f64>::init(64, &FC_HIDDEN, 128, &mut RngHandle::new(0));
        assert_eq!(params.hidden(), FC_HIDDEN.to_vec());
        assert_eq!(params.input_dim(), 64);
        assert_eq!(params.output_dim(), 128);
        assert!(params.validate().is_ok());
    }

    #[test]
    fn input_size_checked() {
        let (p, x) = setup();
        let params = FcParams::<f64>::zeros(4, &[4], 8);
        assert!(fc_forward(&params, &p, &x).is_err());
    }
}
