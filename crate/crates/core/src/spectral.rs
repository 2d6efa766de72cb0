//! Fourier machinery on a periodic grid.
//!
//! First derivatives use the symbol `i·k` with the Nyquist wavenumber zeroed,
//! which keeps derivatives of real fields real and makes every derivative
//! matrix exactly skew-symmetric. The Laplacian symbol `-|k|²` keeps the
//! Nyquist wavenumber so that the checkerboard mode is damped.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::GridSpec;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// FFT plans and wavenumber tables for one grid.
pub struct Spectral {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Per-axis derivative wavenumbers over the flat layout (Nyquist zeroed).
    kdiff: Vec<Vec<f64>>,
    /// `|k|²` over the flat layout, Nyquist retained.
    ksq: Vec<f64>,
    /// Flat index of `-k` for each `k`.
    negated: Vec<u32>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.points();
        let dim = grid.dim();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);

        let base = 2.0 * std::f64::consts::PI / grid.box_length();
        let signed = |j: usize| -> i64 {
            if j <= n / 2 {
                j as i64
            } else {
                j as i64 - n as i64
            }
        };
        let axis_kd: Vec<f64> = (0..n)
            .map(|j| if j == n / 2 { 0.0 } else { base * signed(j) as f64 })
            .collect();
        let axis_k2: Vec<f64> = (0..n).map(|j| (base * signed(j) as f64).powi(2)).collect();

        let len = grid.len();
        let mut kdiff = vec![vec![0.0; len]; dim];
        let mut ksq = vec![0.0; len];
        let mut negated = vec![0u32; len];
        for flat in 0..len {
            let idx = grid.multi_index(flat);
            let mut neg = [0usize; 3];
            for axis in 0..dim {
                kdiff[axis][flat] = axis_kd[idx[axis]];
                ksq[flat] += axis_k2[idx[axis]];
                neg[axis] = (n - idx[axis]) % n;
            }
            negated[flat] = grid.flat_index(&neg[..dim]) as u32;
        }

        Self { grid, forward, inverse, kdiff, ksq, negated }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn ksq(&self) -> &[f64] {
        &self.ksq
    }

    pub fn kdiff(&self, axis: usize) -> &[f64] {
        &self.kdiff[axis]
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        let n = self.grid.points();
        let dim = self.grid.dim();
        let len = data.len();
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];

        // Last axis is contiguous.
        plan.process_with_scratch(data, &mut scratch);

        let mut lines = vec![ZERO; len];
        for axis in 0..dim - 1 {
            let stride = self.grid.stride(axis);
            let block = stride * n;
            // Gather every line along `axis` into contiguous storage.
            let mut line = 0;
            for outer in (0..len).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    let dst = &mut lines[line * n..(line + 1) * n];
                    for (j, d) in dst.iter_mut().enumerate() {
                        *d = data[base + j * stride];
                    }
                    line += 1;
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            let mut line = 0;
            for outer in (0..len).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    let src = &lines[line * n..(line + 1) * n];
                    for (j, s) in src.iter().enumerate() {
                        data[base + j * stride] = *s;
                    }
                    line += 1;
                }
            }
        }

        if inverse {
            let scale = 1.0 / len as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }

    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// Inverse transform including the `1/Nⁿ` normalisation.
    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    pub fn forward_real(&self, u: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    /// Transforms two real fields with a single complex FFT.
    pub fn forward_real_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut z: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| Complex64::new(x, y))
            .collect();
        self.transform(&mut z, false);
        let mut fa = vec![ZERO; z.len()];
        let mut fb = vec![ZERO; z.len()];
        for k in 0..z.len() {
            let zk = z[k];
            let zn = z[self.negated[k] as usize].conj();
            fa[k] = 0.5 * (zk + zn);
            // (zk - zn) / (2i)
            let d = zk - zn;
            fb[k] = Complex64::new(0.5 * d.im, -0.5 * d.re);
        }
        (fa, fb)
    }

    /// Inverse transform of a Hermitian spectrum, keeping the real part.
    pub fn inverse_real(&self, spectrum: Vec<Complex64>) -> Vec<f64> {
        let mut data = spectrum;
        self.transform(&mut data, true);
        data.into_iter().map(|c| c.re).collect()
    }

    /// Inverts two Hermitian spectra with a single complex FFT.
    pub fn inverse_real_pair(&self, a: &[Complex64], b: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let mut z: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| x + Complex64::new(-y.im, y.re))
            .collect();
        self.transform(&mut z, true);
        let re = z.iter().map(|c| c.re).collect();
        let im = z.iter().map(|c| c.im).collect();
        (re, im)
    }

    /// Multiplies a spectrum by `i·k_axis`.
    pub fn derivative_symbol(&self, spectrum: &[Complex64], axis: usize) -> Vec<Complex64> {
        spectrum
            .iter()
            .zip(&self.kdiff[axis])
            .map(|(c, &k)| Complex64::new(-k * c.im, k * c.re))
            .collect()
    }

    /// Inverse transforms a list of Hermitian spectra, pairing them up.
    pub fn inverse_real_many(&self, spectra: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(spectra.len());
        let mut i = 0;
        while i < spectra.len() {
            if i + 1 < spectra.len() {
                let (a, b) = self.inverse_real_pair(&spectra[i], &spectra[i + 1]);
                out.push(a);
                out.push(b);
                i += 2;
            } else {
                out.push(self.inverse_real(spectra[i].clone()));
                i += 1;
            }
        }
        out
    }

    /// Forward transforms a list of real fields, pairing them up.
    pub fn forward_real_many(&self, fields: &[&[f64]]) -> Vec<Vec<Complex64>> {
        let mut out = Vec::with_capacity(fields.len());
        let mut i = 0;
        while i < fields.len() {
            if i + 1 < fields.len() {
                let (a, b) = self.forward_real_pair(fields[i], fields[i + 1]);
                out.push(a);
                out.push(b);
                i += 2;
            } else {
                out.push(self.forward_real(fields[i]));
                i += 1;
            }
        }
        out
    }

    /// Spectral gradient of a real field given its spectrum.
    pub fn gradient_from_spectrum(&self, spectrum: &[Complex64]) -> Vec<Vec<f64>> {
        let parts: Vec<Vec<Complex64>> = (0..self.grid.dim())
            .map(|axis| self.derivative_symbol(spectrum, axis))
            .collect();
        self.inverse_real_many(&parts)
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let spectrum = self.forward_real(u);
        self.gradient_from_spectrum(&spectrum)
    }

    /// Spectrum of `Σᵢ ∂ᵢ vᵢ`.
    pub fn divergence_spectrum(&self, components: &[&[f64]]) -> Vec<Complex64> {
        let spectra = self.forward_real_many(components);
        let mut acc = vec![ZERO; self.grid.len()];
        for (axis, s) in spectra.iter().enumerate() {
            let k = &self.kdiff[axis];
            for (j, a) in acc.iter_mut().enumerate() {
                *a += Complex64::new(-k[j] * s[j].im, k[j] * s[j].re);
            }
        }
        acc
    }

    pub fn divergence(&self, components: &[&[f64]]) -> Vec<f64> {
        let spectrum = self.divergence_spectrum(components);
        self.inverse_real(spectrum)
    }

    /// `Σ_k |k|² |û_k|² / Nⁿ`, i.e. `Σ_x |∇u|² ` with the Nyquist mode
    /// counted through the Laplacian symbol (multiply by `hⁿ` for the
    /// integral).
    pub fn gradient_energy(&self, spectrum_u: &[Complex64], spectrum_v: &[Complex64]) -> f64 {
        let len = self.grid.len() as f64;
        spectrum_u
            .iter()
            .zip(spectrum_v)
            .zip(&self.ksq)
            .map(|((a, b), &k2)| k2 * (a.re * b.re + a.im * b.im))
            .sum::<f64>()
            / len
    }
}
