//! Two-branch U-Net (pressure, saturation) over a flat parameter vector.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layers::*;
use crate::real::{gemm, Real};

/// Architecture hyper-parameters. The parameter count depends on these alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_channels: usize,
    /// Number of pooling (and matching upsampling) stages.
    pub depth: usize,
    /// Feature count at full resolution; doubles at every level.
    pub base_channels: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec { input_channels: 2, depth: 3, base_channels: 32 }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.depth == 0 || self.base_channels == 0 {
            return Err(Error::invalid("network spec", "channels and depth must be positive"));
        }
        if self.depth > 8 {
            return Err(Error::invalid("network spec", "depth above 8"));
        }
        Ok(())
    }

    /// Spatial multiple required by the pooling stages.
    pub fn multiple(&self) -> usize {
        1 << self.depth
    }

    /// Hex SHA-256 over the canonical field listing.
    pub fn hash(&self) -> String {
        let canonical = format!(
            "unet2;input_channels={};depth={};base_channels={};kernel=3;pad=1;norm=spatial;act=gelu;pool=max2;up=convT2;head=1x1-sigmoid",
            self.input_channels, self.depth, self.base_channels
        );
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy)]
enum InitKind {
    /// Kaiming normal with the given fan-in.
    Kaiming(usize),
    Zeros,
    Ones,
}

#[derive(Debug, Clone, Copy)]
struct ConvUnit {
    cin: usize,
    cout: usize,
    w: usize,
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone, Copy)]
struct UpUnit {
    cin: usize,
    cout: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Branch {
    enc: Vec<[ConvUnit; 2]>,
    bottom: [ConvUnit; 2],
    up: Vec<UpUnit>,
    dec: Vec<[ConvUnit; 2]>,
    head_w: usize,
    head_b: usize,
    c0: usize,
}

struct Builder {
    tensors: Vec<TensorInfo>,
    init: Vec<InitKind>,
    len: usize,
}

impl Builder {
    fn push(&mut self, name: String, len: usize, init: InitKind) -> usize {
        let offset = self.len;
        self.tensors.push(TensorInfo { name, offset, len });
        self.init.push(init);
        self.len += len;
        offset
    }

    fn conv(&mut self, prefix: &str, cin: usize, cout: usize) -> ConvUnit {
        ConvUnit {
            cin,
            cout,
            w: self.push(format!("{prefix}.weight"), cout * cin * 9, InitKind::Kaiming(cin * 9)),
            gamma: self.push(format!("{prefix}.gamma"), cout, InitKind::Ones),
            beta: self.push(format!("{prefix}.beta"), cout, InitKind::Zeros),
        }
    }

    fn branch(&mut self, name: &str, spec: &NetworkSpec) -> Branch {
        let ch = |l: usize| spec.base_channels << l;
        let mut enc = Vec::new();
        let mut cin = spec.input_channels;
        for l in 0..spec.depth {
            let a = self.conv(&format!("{name}.enc{l}.conv0"), cin, ch(l));
            let b = self.conv(&format!("{name}.enc{l}.conv1"), ch(l), ch(l));
            enc.push([a, b]);
            cin = ch(l);
        }
        let d = spec.depth;
        let bottom = [
            self.conv(&format!("{name}.bottom.conv0"), ch(d - 1), ch(d)),
            self.conv(&format!("{name}.bottom.conv1"), ch(d), ch(d)),
        ];
        let mut up = Vec::new();
        let mut dec = Vec::new();
        for l in (0..d).rev() {
            let (ci, co) = (ch(l + 1), ch(l));
            up.push(UpUnit {
                cin: ci,
                cout: co,
                w: self.push(format!("{name}.up{l}.weight"), co * 4 * ci, InitKind::Kaiming(ci)),
                b: self.push(format!("{name}.up{l}.bias"), co, InitKind::Zeros),
            });
            let a = self.conv(&format!("{name}.dec{l}.conv0"), 2 * co, co);
            let b = self.conv(&format!("{name}.dec{l}.conv1"), co, co);
            dec.push([a, b]);
        }
        let c0 = ch(0);
        let head_w = self.push(format!("{name}.head.weight"), c0, InitKind::Kaiming(c0));
        let head_b = self.push(format!("{name}.head.bias"), 1, InitKind::Zeros);
        Branch { enc, bottom, up, dec, head_w, head_b, c0 }
    }
}

/// Network topology and parameter layout; parameters live in a separate flat
/// vector so the same net can run in `f32` and `f64`.
#[derive(Debug, Clone)]
pub struct PicNet {
    spec: NetworkSpec,
    tensors: Vec<TensorInfo>,
    init: Vec<InitKind>,
    n_params: usize,
    branches: [Branch; 2],
}

/// Which output head.
pub const PRESSURE: usize = 0;
pub const SATURATION: usize = 1;

impl PicNet {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut b = Builder { tensors: Vec::new(), init: Vec::new(), len: 0 };
        let p = b.branch("pressure", &spec);
        let s = b.branch("saturation", &spec);
        Ok(PicNet { spec, tensors: b.tensors, init: b.init, n_params: b.len, branches: [p, s] })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    /// Kaiming-normal weights, zero biases, unit norm scales.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.n_params);
        for (t, kind) in self.tensors.iter().zip(&self.init) {
            match *kind {
                InitKind::Kaiming(fan_in) => {
                    let normal = Normal::new(0.0f64, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    out.extend((0..t.len).map(|_| normal.sample(rng) as f32));
                }
                InitKind::Zeros => out.extend(std::iter::repeat(0.0).take(t.len)),
                InitKind::Ones => out.extend(std::iter::repeat(1.0).take(t.len)),
            }
        }
        out
    }

    /// Padded size for an `h x w` grid.
    pub fn padded(&self, h: usize, w: usize) -> (usize, usize) {
        let m = self.spec.multiple();
        (h.div_ceil(m) * m, w.div_ceil(m) * m)
    }

    fn pad_input<T: Real>(&self, input: &[T], h: usize, w: usize) -> Result<(Vec<T>, usize, usize)> {
        let c = self.spec.input_channels;
        if input.len() != c * h * w || h == 0 || w == 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("{c}x{h}x{w}"),
                found: format!("{} values", input.len()),
            });
        }
        let (hp, wp) = self.padded(h, w);
        let mut x = vec![T::zero(); c * hp * wp];
        for ch in 0..c {
            for y in 0..h {
                x[ch * hp * wp + y * wp..][..w].copy_from_slice(&input[ch * h * w + y * w..][..w]);
            }
        }
        Ok((x, hp, wp))
    }

    fn check_params<T>(&self, params: &[T]) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", self.n_params),
                found: format!("{}", params.len()),
            });
        }
        Ok(())
    }

    /// Sigmoid outputs `(x_p, x_s)` on the unpadded `h x w` grid.
    pub fn forward<T: Real>(&self, params: &[T], input: &[T], h: usize, w: usize) -> Result<[Vec<T>; 2]> {
        self.check_params(params)?;
        let (x, hp, wp) = self.pad_input(input, h, w)?;
        let run = |b: usize| crop(&branch_forward(&self.branches[b], params, &x, hp, wp, None), hp, wp, h, w);
        let [p, s] = parallel_pair(run);
        Ok([p, s])
    }

    /// Forward pass keeping activations for [`PicNet::backward`].
    pub fn forward_train<T: Real>(&self, params: &[T], input: &[T], h: usize, w: usize) -> Result<([Vec<T>; 2], Tape<T>)> {
        self.check_params(params)?;
        let (x, hp, wp) = self.pad_input(input, h, w)?;
        let run = |b: usize| {
            let mut cache = BranchCache::default();
            let out = branch_forward(&self.branches[b], params, &x, hp, wp, Some(&mut cache));
            (crop(&out, hp, wp, h, w), cache)
        };
        let [(p, cp), (s, cs)] = parallel_pair(run);
        Ok(([p, s], Tape { caches: [cp, cs], h, w, hp, wp }))
    }

    /// Parameter gradient given gradients with respect to the two sigmoid outputs.
    pub fn backward<T: Real>(&self, params: &[T], tape: &Tape<T>, d_out: [&[T]; 2]) -> Result<Vec<T>> {
        self.check_params(params)?;
        for d in d_out {
            if d.len() != tape.h * tape.w {
                return Err(Error::ShapeMismatch {
                    expected: format!("{}x{}", tape.h, tape.w),
                    found: format!("{} values", d.len()),
                });
            }
        }
        let run = |b: usize| {
            let mut grad = vec![T::zero(); self.n_params];
            let dpad = uncrop(d_out[b], tape.hp, tape.wp, tape.h, tape.w);
            branch_backward(&self.branches[b], params, &tape.caches[b], &dpad, tape.hp, tape.wp, &mut grad);
            grad
        };
        let [mut g0, g1] = parallel_pair(run);
        // The branches own disjoint parameter ranges.
        for (a, b) in g0.iter_mut().zip(&g1) {
            *a += *b;
        }
        Ok(g0)
    }
}

/// Runs `f(0)` and `f(1)` on two threads when `PORFLOW_THREADS` allows it.
fn parallel_pair<R: Send, F: Fn(usize) -> R + Sync>(f: F) -> [R; 2] {
    if crate::max_threads() >= 2 {
        std::thread::scope(|s| {
            let h = s.spawn(|| f(1));
            let a = f(0);
            [a, h.join().expect("branch thread panicked")]
        })
    } else {
        [f(0), f(1)]
    }
}

fn crop<T: Real>(x: &[T], hp: usize, wp: usize, h: usize, w: usize) -> Vec<T> {
    debug_assert_eq!(x.len(), hp * wp);
    (0..h).flat_map(|y| x[y * wp..y * wp + w].iter().copied()).collect()
}

fn uncrop<T: Real>(x: &[T], hp: usize, wp: usize, h: usize, w: usize) -> Vec<T> {
    let mut out = vec![T::zero(); hp * wp];
    for y in 0..h {
        out[y * wp..y * wp + w].copy_from_slice(&x[y * w..(y + 1) * w]);
    }
    out
}

#[derive(Debug, Clone, Default)]
struct ConvCache<T> {
    cols: Vec<T>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    u: Vec<T>,
}

#[derive(Debug, Clone, Default)]
struct BranchCache<T> {
    enc: Vec<[ConvCache<T>; 2]>,
    skips: Vec<Vec<T>>,
    pool_idx: Vec<Vec<usize>>,
    bottom: [ConvCache<T>; 2],
    up_in: Vec<Vec<T>>,
    dec: Vec<[ConvCache<T>; 2]>,
    head_in: Vec<T>,
    sig: Vec<T>,
}

/// Activations recorded by [`PicNet::forward_train`].
#[derive(Debug, Clone)]
pub struct Tape<T> {
    caches: [BranchCache<T>; 2],
    h: usize,
    w: usize,
    hp: usize,
    wp: usize,
}

fn conv_forward<T: Real>(
    u: &ConvUnit,
    params: &[T],
    x: &[T],
    h: usize,
    w: usize,
    cache: Option<&mut ConvCache<T>>,
) -> Vec<T> {
    let hw = h * w;
    let cols = im2col(x, u.cin, h, w);
    let z = conv3x3(&params[u.w..u.w + u.cout * u.cin * 9], &cols, u.cin, u.cout, hw);
    let (xhat, inv_std) = normalize(&z, u.cout, hw);
    let mut pre = vec![T::zero(); u.cout * hw];
    for ch in 0..u.cout {
        let (g, b) = (params[u.gamma + ch], params[u.beta + ch]);
        for (d, &v) in pre[ch * hw..(ch + 1) * hw].iter_mut().zip(&xhat[ch * hw..(ch + 1) * hw]) {
            *d = g * v + b;
        }
    }
    let out = pre.iter().map(|&v| gelu(v)).collect();
    if let Some(c) = cache {
        *c = ConvCache { cols, xhat, inv_std, u: pre };
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Real>(
    u: &ConvUnit,
    params: &[T],
    cache: &ConvCache<T>,
    dout: &[T],
    h: usize,
    w: usize,
    grad: &mut [T],
    need_input_grad: bool,
) -> Option<Vec<T>> {
    let hw = h * w;
    let mut dxhat = vec![T::zero(); u.cout * hw];
    for ch in 0..u.cout {
        let g = params[u.gamma + ch];
        let (mut dg, mut db) = (T::zero(), T::zero());
        for k in ch * hw..(ch + 1) * hw {
            let du = dout[k] * gelu_grad(cache.u[k]);
            dg += du * cache.xhat[k];
            db += du;
            dxhat[k] = du * g;
        }
        grad[u.gamma + ch] += dg;
        grad[u.beta + ch] += db;
    }
    let dz = normalize_backward(&dxhat, &cache.xhat, &cache.inv_std, u.cout, hw);
    let wlen = u.cout * u.cin * 9;
    let dcols = conv3x3_backward(
        &params[u.w..u.w + wlen],
        &cache.cols,
        &dz,
        &mut grad[u.w..u.w + wlen],
        u.cin,
        u.cout,
        hw,
        need_input_grad,
    )?;
    Some(col2im(&dcols, u.cin, h, w))
}

fn branch_forward<T: Real>(
    br: &Branch,
    params: &[T],
    input: &[T],
    hp: usize,
    wp: usize,
    mut cache: Option<&mut BranchCache<T>>,
) -> Vec<T> {
    let keep = cache.is_some();
    let mut rec = BranchCache::default();
    let (mut h, mut w) = (hp, wp);
    let mut x = input.to_vec();
    for units in &br.enc {
        let mut cc: [ConvCache<T>; 2] = Default::default();
        let a = conv_forward(&units[0], params, &x, h, w, keep.then_some(&mut cc[0]));
        let b = conv_forward(&units[1], params, &a, h, w, keep.then_some(&mut cc[1]));
        let (pooled, idx) = maxpool2(&b, units[1].cout, h, w);
        rec.enc.push(cc);
        rec.skips.push(b);
        rec.pool_idx.push(idx);
        x = pooled;
        h /= 2;
        w /= 2;
    }
    let mut cc: [ConvCache<T>; 2] = Default::default();
    let a = conv_forward(&br.bottom[0], params, &x, h, w, keep.then_some(&mut cc[0]));
    x = conv_forward(&br.bottom[1], params, &a, h, w, keep.then_some(&mut cc[1]));
    rec.bottom = cc;
    for (i, (upu, units)) in br.up.iter().zip(&br.dec).enumerate() {
        let level = br.enc.len() - 1 - i;
        let ulen = upu.cout * 4 * upu.cin;
        let upsampled = upconv2(
            &params[upu.w..upu.w + ulen],
            &params[upu.b..upu.b + upu.cout],
            &x,
            upu.cin,
            upu.cout,
            h,
            w,
        );
        h *= 2;
        w *= 2;
        let mut cat = rec.skips[level].clone();
        cat.extend_from_slice(&upsampled);
        if keep {
            rec.up_in.push(std::mem::take(&mut x));
        }
        let mut cc: [ConvCache<T>; 2] = Default::default();
        let a = conv_forward(&units[0], params, &cat, h, w, keep.then_some(&mut cc[0]));
        x = conv_forward(&units[1], params, &a, h, w, keep.then_some(&mut cc[1]));
        rec.dec.push(cc);
    }
    let hw = h * w;
    let mut z = vec![params[br.head_b]; hw];
    gemm(false, false, 1, hw, br.c0, &params[br.head_w..br.head_w + br.c0], &x, &mut z, true);
    let sig: Vec<T> = z.into_iter().map(sigmoid).collect();
    if let Some(c) = cache.as_deref_mut() {
        rec.head_in = x;
        rec.sig = sig.clone();
        *c = rec;
    }
    sig
}

#[allow(clippy::too_many_arguments)]
fn branch_backward<T: Real>(
    br: &Branch,
    params: &[T],
    cache: &BranchCache<T>,
    d_sig: &[T],
    hp: usize,
    wp: usize,
    grad: &mut [T],
) {
    let depth = br.enc.len();
    let (mut h, mut w) = (hp, wp);
    let hw = h * w;
    let dz: Vec<T> = d_sig.iter().zip(&cache.sig).map(|(&g, &s)| g * s * (T::one() - s)).collect();
    grad[br.head_b] += dz.iter().fold(T::zero(), |a, &v| a + v);
    gemm(false, true, 1, br.c0, hw, &dz, &cache.head_in, &mut grad[br.head_w..br.head_w + br.c0], true);
    let mut dx = vec![T::zero(); br.c0 * hw];
    gemm(true, false, br.c0, hw, 1, &params[br.head_w..br.head_w + br.c0], &dz, &mut dx, false);

    let mut dskips: Vec<Vec<T>> = vec![Vec::new(); depth];
    for (i, (upu, units)) in br.up.iter().zip(&br.dec).enumerate().rev() {
        let level = depth - 1 - i;
        let cc = &cache.dec[i];
        let da = conv_backward(&units[1], params, &cc[1], &dx, h, w, grad, true).expect("input grad");
        let dcat = conv_backward(&units[0], params, &cc[0], &da, h, w, grad, true).expect("input grad");
        let skip_len = upu.cout * h * w;
        dskips[level] = dcat[..skip_len].to_vec();
        let dup = &dcat[skip_len..];
        h /= 2;
        w /= 2;
        let ulen = upu.cout * 4 * upu.cin;
        let (gw, gb) = split_two(grad, upu.w, ulen, upu.b, upu.cout);
        dx = upconv2_backward(&params[upu.w..upu.w + ulen], &cache.up_in[i], dup, gw, gb, upu.cin, upu.cout, h, w);
    }
    let da = conv_backward(&br.bottom[1], params, &cache.bottom[1], &dx, h, w, grad, true).expect("input grad");
    dx = conv_backward(&br.bottom[0], params, &cache.bottom[0], &da, h, w, grad, true).expect("input grad");
    for level in (0..depth).rev() {
        let units = &br.enc[level];
        h *= 2;
        w *= 2;
        let mut db = maxpool2_backward(&dx, &cache.pool_idx[level], units[1].cout * h * w);
        for (a, &s) in db.iter_mut().zip(&dskips[level]) {
            *a += s;
        }
        let cc = &cache.enc[level];
        let da = conv_backward(&units[1], params, &cc[1], &db, h, w, grad, true).expect("input grad");
        match conv_backward(&units[0], params, &cc[0], &da, h, w, grad, level > 0) {
            Some(d) => dx = d,
            None => break,
        }
    }
}

/// Disjoint mutable views of two tensors in the gradient vector (`a < b`).
fn split_two<T>(grad: &mut [T], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [T], &mut [T]) {
    assert!(a + alen <= b);
    let (lo, hi) = grad.split_at_mut(b);
    (&mut lo[a..a + alen], &mut hi[..blen])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> PicNet {
        PicNet::new(NetworkSpec { input_channels: 2, depth: 2, base_channels: 2 }).unwrap()
    }

    #[test]
    fn tensor_layout_is_contiguous() {
        let net = PicNet::new(NetworkSpec::default()).unwrap();
        let mut end = 0;
        for t in net.tensors() {
            assert_eq!(t.offset, end);
            end += t.len;
        }
        assert_eq!(end, net.n_params());
        assert!(net.tensors()[0].name.starts_with("pressure.enc0"));
    }

    #[test]
    fn parameter_count_of_default_spec() {
        // per branch: encoder, bottleneck, decoder convs (+2 norm params per
        // channel), transposed convs, 1x1 head
        let c = 32usize;
        let conv = |ci: usize, co: usize| co * ci * 9 + 2 * co;
        let mut per = conv(2, c) + conv(c, c);
        for l in 1..=3 {
            per += conv(c << (l - 1), c << l) + conv(c << l, c << l);
        }
        for l in 0..3 {
            let (ci, co) = (c << (l + 1), c << l);
            per += co * 4 * ci + co + conv(2 * co, co) + conv(co, co);
        }
        per += c + 1;
        assert_eq!(PicNet::new(NetworkSpec::default()).unwrap().n_params(), 2 * per);
    }

    #[test]
    fn spec_hash_tracks_fields() {
        let a = NetworkSpec::default();
        let b = NetworkSpec { base_channels: 16, ..a };
        assert_eq!(a.hash(), NetworkSpec::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn padding_and_shapes() {
        let net = tiny();
        assert_eq!(net.padded(5, 8), (8, 8));
        let params: Vec<f64> = net.init_params(&mut ChaCha8Rng::seed_from_u64(0)).iter().map(|&v| v as f64).collect();
        let input = vec![0.0; 2 * 5 * 7];
        let [p, s] = net.forward(&params, &input, 5, 7).unwrap();
        assert_eq!((p.len(), s.len()), (35, 35));
        assert!(matches!(net.forward(&params, &input, 5, 6), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(net.forward(&params[1..], &input, 5, 7), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn cached_and_plain_forward_agree_bitwise() {
        let net = tiny();
        let params = net.init_params(&mut ChaCha8Rng::seed_from_u64(3));
        let mut input = vec![0.0f32; 2 * 6 * 6];
        input[7] = 0.8;
        input[36 + 30] = 0.4;
        let a = net.forward(&params, &input, 6, 6).unwrap();
        let (b, _) = net.forward_train(&params, &input, 6, 6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params: Vec<f64> = net.init_params(&mut rng).iter().map(|&v| v as f64 + 0.05 * rng.gen::<f64>()).collect();
        let (h, w) = (5, 6);
        let input: Vec<f64> = (0..2 * h * w).map(|k| if k % 7 == 0 { 0.3 + 0.01 * k as f64 } else { 0.0 }).collect();
        let wp: Vec<f64> = (0..h * w).map(|k| (k as f64 * 0.7).sin()).collect();
        let ws: Vec<f64> = (0..h * w).map(|k| (k as f64 * 0.3).cos()).collect();
        let objective = |p: &[f64]| {
            let [a, b] = net.forward(p, &input, h, w).unwrap();
            a.iter().zip(&wp).map(|(x, y)| x * y).sum::<f64>() + b.iter().zip(&ws).map(|(x, y)| x * y).sum::<f64>()
        };
        let (_, tape) = net.forward_train(&params, &input, h, w).unwrap();
        let grad = net.backward(&params, &tape, [&wp, &ws]).unwrap();
        let mut worst: f64 = 0.0;
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for k in (0..net.n_params()).step_by(7) {
            let step = 1e-6;
            let mut pp = params.clone();
            pp[k] += step;
            let mut pm = params.clone();
            pm[k] -= step;
            let fd = (objective(&pp) - objective(&pm)) / (2.0 * step);
            let err = (fd - grad[k]).abs() / (fd.abs().max(grad[k].abs()) + 1e-6 * scale);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }
}
