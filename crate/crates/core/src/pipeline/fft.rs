//! Radix-2 FFT with unitary normalization (1/sqrt(N) in both directions).
//!
//! Sizes are powers of two only; the delay-domain pipeline uses
//! 16/32/64/128/256, for which twiddle tables are precomputed once.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

/// Precomputed twiddle factors e^{-2*pi*i*k/n} for k in 0..n/2.
struct Twiddles {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Twiddles {
    fn new(n: usize) -> Self {
        let half = n / 2;
        let mut re = Vec::with_capacity(half);
        let mut im = Vec::with_capacity(half);
        for k in 0..half {
            let ang = -2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
            re.push(ang.cos());
            im.push(ang.sin());
        }
        Twiddles { re, im }
    }
}

static TABLES: LazyLock<Mutex<HashMap<usize, Arc<Twiddles>>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

fn twiddles(n: usize) -> Arc<Twiddles> {
    let mut map = TABLES.lock().unwrap();
    map.entry(n).or_insert_with(|| Arc::new(Twiddles::new(n))).clone()
}

fn bit_reverse_permute(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    let mut j = 0usize;
    for i in 0..n {
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
        let mut mask = n >> 1;
        while mask > 0 && j & mask != 0 {
            j &= !mask;
            mask >>= 1;
        }
        j |= mask;
    }
}

fn radix2(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    assert_eq!(n, im.len(), "real/imag length mismatch");
    assert!(n.is_power_of_two(), "fft size must be a power of two, got {n}");
    if n <= 1 {
        return;
    }
    let tw = twiddles(n);
    bit_reverse_permute(re, im);
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for base in (0..n).step_by(len) {
            for j in 0..half {
                let wr = tw.re[j * stride];
                let wi = if inverse { -tw.im[j * stride] } else { tw.im[j * stride] };
                let a = base + j;
                let b = a + half;
                let tr = wr * re[b] - wi * im[b];
                let ti = wr * im[b] + wi * re[b];
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

fn scale(re: &mut [f64], im: &mut [f64]) {
    let s = 1.0 / (re.len() as f64).sqrt();
    for v in re.iter_mut() {
        *v *= s;
    }
    for v in im.iter_mut() {
        *v *= s;
    }
}

/// Forward unitary DFT: X_k = (1/sqrt(N)) * sum_n x_n e^{-2*pi*i*k*n/N}.
pub fn fft_unitary(re: &mut [f64], im: &mut [f64]) {
    radix2(re, im, false);
    scale(re, im);
}

/// Inverse unitary DFT: x_n = (1/sqrt(N)) * sum_k X_k e^{+2*pi*i*k*n/N}.
pub fn ifft_unitary(re: &mut [f64], im: &mut [f64]) {
    radix2(re, im, true);
    scale(re, im);
}
