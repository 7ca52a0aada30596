//! Cached 3D real-to-complex transforms on the cubic grid.
//!
//! Physical data is stored x-fastest: `i + n*(j + n*l)`. Spectral data keeps
//! the non-redundant half along x: `kx + nh*(j + n*l)` with `nh = n/2 + 1`.
//! Forward transforms are normalized by `1/n^3` so that coefficients are the
//! Fourier coefficients of the trigonometric interpolant.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft3 {
    n: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn cache() -> &'static Mutex<HashMap<usize, Arc<Fft3>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Fft3>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub(crate) fn plan(n: usize) -> Arc<Fft3> {
    let mut map = cache().lock().expect("fft cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let mut real = RealFftPlanner::<f64>::new();
            let mut cplx = FftPlanner::<f64>::new();
            Arc::new(Fft3 {
                n,
                r2c: real.plan_fft_forward(n),
                c2r: real.plan_fft_inverse(n),
                fwd: cplx.plan_fft_forward(n),
                inv: cplx.plan_fft_inverse(n),
            })
        })
        .clone()
}

impl Fft3 {
    pub(crate) fn forward(&self, input: &[f64], out: &mut [Complex64]) {
        let n = self.n;
        let nh = n / 2 + 1;
        debug_assert_eq!(input.len(), n * n * n);
        debug_assert_eq!(out.len(), nh * n * n);

        let mut line = self.r2c.make_input_vec();
        let mut scratch = self.r2c.make_scratch_vec();
        for (row, dst) in input.chunks_exact(n).zip(out.chunks_exact_mut(nh)) {
            line.copy_from_slice(row);
            self.r2c.process_with_scratch(&mut line, dst, &mut scratch).expect("r2c length mismatch");
        }
        self.complex_yz(out, &self.fwd);

        let norm = 1.0 / (n * n * n) as f64;
        out.iter_mut().for_each(|c| *c *= norm);
    }

    /// Consumes `spec` as scratch.
    pub(crate) fn inverse(&self, spec: &mut [Complex64], out: &mut [f64]) {
        let n = self.n;
        let nh = n / 2 + 1;
        debug_assert_eq!(spec.len(), nh * n * n);
        debug_assert_eq!(out.len(), n * n * n);

        self.complex_yz(spec, &self.inv);

        let mut scratch = self.c2r.make_scratch_vec();
        for (src, row) in spec.chunks_exact_mut(nh).zip(out.chunks_exact_mut(n)) {
            // Real part of the Hermitian-symmetric lines.
            src[0].im = 0.0;
            src[nh - 1].im = 0.0;
            self.c2r.process_with_scratch(src, row, &mut scratch).expect("c2r length mismatch");
        }
    }

    fn complex_yz(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let nh = n / 2 + 1;
        let mut buf = vec![Complex64::default(); nh * n];
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];

        // y: each l-plane is an nh x n block with stride nh along j.
        for plane in data.chunks_exact_mut(nh * n) {
            for j in 0..n {
                for kx in 0..nh {
                    buf[kx * n + j] = plane[kx + nh * j];
                }
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for j in 0..n {
                for kx in 0..nh {
                    plane[kx + nh * j] = buf[kx * n + j];
                }
            }
        }

        // z: for fixed j gather the (kx, l) slab with stride nh*n along l.
        let slab = nh * n;
        for j in 0..n {
            for l in 0..n {
                let base = nh * j + slab * l;
                for kx in 0..nh {
                    buf[kx * n + l] = data[base + kx];
                }
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for l in 0..n {
                let base = nh * j + slab * l;
                for kx in 0..nh {
                    data[base + kx] = buf[kx * n + l];
                }
            }
        }
    }
}
