//! C ABI for the `dualspace` library.
//!
//! Every function returns a [`DsStatus`]; on failure a message is available
//! from [`ds_last_error_message`] on the calling thread. Matrices cross the
//! boundary as row-major `double` buffers with explicit row and column
//! counts. Objects are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dualspace::autoencoder::{self, AeConfig, AutoencoderModel};
use dualspace::data::{self, Dataset, HoldoutRule, RingParams};
use dualspace::eval::{self, Bandwidth};
use dualspace::gan::{self, GanConfig, GanModel};
use dualspace::{Error, Tensor};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    NonFinite = 4,
    Io = 5,
    Format = 6,
    Diverged = 7,
    Config = 8,
    Panic = 9,
    /// A pipeline phase failed; see the message.
    Runtime = 10,
}

impl From<&Error> for DsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::ShapeMismatch { .. } => DsStatus::ShapeMismatch,
            Error::NonFinite { .. } => DsStatus::NonFinite,
            Error::Io { .. } => DsStatus::Io,
            Error::Format { .. } | Error::Version { .. } | Error::ManifestMismatch { .. } => DsStatus::Format,
            Error::Diverged { .. } | Error::GanDiverged { .. } => DsStatus::Diverged,
            Error::Config(_) => DsStatus::Config,
            Error::Phase { source, .. } => DsStatus::from(source.as_ref()),
            _ => DsStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ds_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

struct Fail(DsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(DsStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DsStatus::NullPointer, format!("{what} is NULL"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            DsStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be NULL or point to `rows * cols` readable doubles.
unsafe fn read_matrix(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<Tensor, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Fail(DsStatus::InvalidArgument, format!("{what}: size overflow")))?;
    let values = std::slice::from_raw_parts(p, len).to_vec();
    Ok(Tensor::matrix(rows, cols, values)?)
}

/// # Safety
/// `out` must be NULL or point to `cap` writable doubles.
unsafe fn write_matrix(m: &Tensor, out: *mut f64, cap: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if cap < m.len() {
        return Err(Fail(
            DsStatus::InvalidArgument,
            format!("output buffer holds {cap} values, need {}", m.len()),
        ));
    }
    ptr::copy_nonoverlapping(m.values().as_ptr(), out, m.len());
    Ok(())
}

/// # Safety
/// `out` must be NULL or valid for one pointer write.
unsafe fn emit<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

/// # Safety
/// `p` must be NULL or a live handle.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `s` must be NULL or a NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(DsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

pub struct DsDataset(Dataset);
pub struct DsAutoencoder(AutoencoderModel);
pub struct DsGan(GanModel);

/// Gaussian-ring mixture with `n_modes` modes on a circle of `radius`.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn ds_dataset_ring(
    n_modes: usize,
    radius: f64,
    sigma: f64,
    n: usize,
    seed: u64,
    out: *mut *mut DsDataset,
) -> DsStatus {
    guard(|| {
        let d = data::gen_gaussian_ring(&RingParams::new(n_modes, radius, sigma), n, seed)?;
        emit(out, DsDataset(d))
    })
}

/// Wrap a row-major matrix (copied).
///
/// # Safety
/// `values` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_dataset_from_matrix(
    values: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut DsDataset,
) -> DsStatus {
    guard(|| {
        let m = read_matrix(values, rows, cols, "values")?;
        emit(out, DsDataset(Dataset::from_matrix("ffi", m)?))
    })
}

/// Apply a hold-out rule such as `labels:3` or `rotation:60..120`.
///
/// # Safety
/// `ds` must be a live dataset handle; `rule` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ds_dataset_holdout(ds: *mut DsDataset, rule: *const c_char) -> DsStatus {
    guard(|| {
        let rule = HoldoutRule::parse(read_str(rule, "rule")?)?;
        let d = ds.as_mut().ok_or_else(|| null("dataset"))?;
        d.0 = data::split_holdout(d.0.clone(), &rule)?;
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live dataset handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_dataset_shape(
    ds: *const DsDataset,
    rows: *mut usize,
    cols: *mut usize,
    heldout: *mut usize,
) -> DsStatus {
    guard(|| {
        let d = &handle(ds, "dataset")?.0;
        if rows.is_null() || cols.is_null() || heldout.is_null() {
            return Err(null("output pointer"));
        }
        *rows = d.len();
        *cols = d.dim();
        *heldout = d.heldout_indices().len();
        Ok(())
    })
}

/// Copy the samples into `out` (capacity `cap` doubles, row-major).
///
/// # Safety
/// `ds` must be a live handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_dataset_samples(ds: *const DsDataset, out: *mut f64, cap: usize) -> DsStatus {
    guard(|| write_matrix(&handle(ds, "dataset")?.0.samples, out, cap))
}

/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_dataset_free(ds: *mut DsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Autoencoder training options. Hidden layers all have width
/// `hidden_width`; `hidden_layers = 0` gives a linear autoencoder.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DsAeOptions {
    pub latent_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

/// Ring defaults.
#[no_mangle]
pub extern "C" fn ds_ae_options_default() -> DsAeOptions {
    let c = AeConfig::ring_default();
    DsAeOptions {
        latent_dim: c.latent_dim,
        hidden_width: c.hidden.first().copied().unwrap_or(0),
        hidden_layers: c.hidden.len(),
        epochs: c.epochs,
        batch_size: c.batch_size,
        learning_rate: c.adam.lr,
        seed: c.seed,
    }
}

/// Train on the held-in rows of `ds`.
///
/// # Safety
/// `ds` must be a live handle, `opts` readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_autoencoder_train(
    ds: *const DsDataset,
    opts: *const DsAeOptions,
    out: *mut *mut DsAutoencoder,
) -> DsStatus {
    guard(|| {
        let d = &handle(ds, "dataset")?.0;
        let o = *handle(opts, "options")?;
        let mut cfg = AeConfig::ring_default();
        cfg.latent_dim = o.latent_dim;
        cfg.hidden = vec![o.hidden_width; o.hidden_layers];
        cfg.epochs = o.epochs;
        cfg.batch_size = o.batch_size;
        cfg.adam.lr = o.learning_rate;
        cfg.seed = o.seed;
        emit(out, DsAutoencoder(autoencoder::train_autoencoder(d, &cfg)?))
    })
}

/// # Safety
/// `ae` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_autoencoder_dims(
    ae: *const DsAutoencoder,
    data_dim: *mut usize,
    latent_dim: *mut usize,
) -> DsStatus {
    guard(|| {
        let m = &handle(ae, "autoencoder")?.0;
        if data_dim.is_null() || latent_dim.is_null() {
            return Err(null("output pointer"));
        }
        *data_dim = m.data_dim();
        *latent_dim = m.latent_dim();
        Ok(())
    })
}

/// Standardized latent codes of `rows` samples; writes `rows * latent_dim`
/// doubles.
///
/// # Safety
/// Buffers must match the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn ds_autoencoder_encode(
    ae: *const DsAutoencoder,
    x: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
    cap: usize,
) -> DsStatus {
    guard(|| {
        let m = &handle(ae, "autoencoder")?.0;
        let x = read_matrix(x, rows, cols, "x")?;
        write_matrix(&autoencoder::encode(m, &x)?.codes, out, cap)
    })
}

/// Decode standardized codes; writes `rows * data_dim` doubles.
///
/// # Safety
/// Buffers must match the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn ds_autoencoder_decode(
    ae: *const DsAutoencoder,
    z: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
    cap: usize,
) -> DsStatus {
    guard(|| {
        let m = &handle(ae, "autoencoder")?.0;
        let z = read_matrix(z, rows, cols, "z")?;
        write_matrix(&autoencoder::decode(m, &z)?, out, cap)
    })
}

/// # Safety
/// `ae` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_autoencoder_free(ae: *mut DsAutoencoder) {
    if !ae.is_null() {
        drop(Box::from_raw(ae));
    }
}

/// GAN training options; generator and discriminator share the hidden
/// layout.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DsGanOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub noise_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub d_steps_per_g_step: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

/// Ring defaults.
#[no_mangle]
pub extern "C" fn ds_gan_options_default() -> DsGanOptions {
    let c = GanConfig::ring_default();
    DsGanOptions {
        epochs: c.epochs,
        batch_size: c.batch_size,
        noise_dim: c.noise_dim,
        hidden_width: c.g_hidden.first().copied().unwrap_or(0),
        hidden_layers: c.g_hidden.len(),
        d_steps_per_g_step: c.d_steps_per_g_step,
        learning_rate: c.adam.lr,
        seed: c.seed,
    }
}

/// Train a GAN on a row-major matrix of real samples.
///
/// # Safety
/// `real` must hold `rows * cols` doubles; `opts` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_gan_train(
    real: *const f64,
    rows: usize,
    cols: usize,
    opts: *const DsGanOptions,
    out: *mut *mut DsGan,
) -> DsStatus {
    guard(|| {
        let x = read_matrix(real, rows, cols, "real")?;
        let o = *handle(opts, "options")?;
        let mut cfg = GanConfig::ring_default();
        cfg.epochs = o.epochs;
        cfg.batch_size = o.batch_size;
        cfg.noise_dim = o.noise_dim;
        cfg.g_hidden = vec![o.hidden_width; o.hidden_layers];
        cfg.d_hidden = cfg.g_hidden.clone();
        cfg.d_steps_per_g_step = o.d_steps_per_g_step;
        cfg.adam.lr = o.learning_rate;
        cfg.seed = o.seed;
        emit(out, DsGan(gan::train_gan(&x, &cfg)?))
    })
}

/// # Safety
/// `g` must be a live handle; `space_dim` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_gan_space_dim(g: *const DsGan, space_dim: *mut usize) -> DsStatus {
    guard(|| {
        let m = &handle(g, "gan")?.0;
        if space_dim.is_null() {
            return Err(null("space_dim"));
        }
        *space_dim = m.space_dim;
        Ok(())
    })
}

/// `k` generator samples; writes `k * space_dim` doubles.
///
/// # Safety
/// `g` must be a live handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_gan_sample(g: *const DsGan, k: usize, seed: u64, out: *mut f64, cap: usize) -> DsStatus {
    guard(|| {
        let m = &handle(g, "gan")?.0;
        write_matrix(&gan::sample_generator(m, k, seed)?, out, cap)
    })
}

/// # Safety
/// `g` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_gan_free(g: *mut DsGan) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Biased RBF MMD². `bandwidth <= 0` selects the median heuristic.
///
/// # Safety
/// `x` holds `n * dim`, `y` holds `m * dim` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_mmd_rbf(
    x: *const f64,
    n: usize,
    y: *const f64,
    m: usize,
    dim: usize,
    bandwidth: f64,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let x = read_matrix(x, n, dim, "x")?;
        let y = read_matrix(y, m, dim, "y")?;
        let bw = if bandwidth > 0.0 {
            Bandwidth::Fixed(bandwidth)
        } else {
            Bandwidth::Median
        };
        let v = eval::mmd_rbf(&x, &y, bw)?.value;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Covered-mode fraction; `counts` (may be NULL) receives `k` per-mode
/// counts.
///
/// # Safety
/// `samples` holds `n * dim`, `centers` holds `k * dim` doubles; `fraction`
/// writable; `counts` NULL or `k` writable entries.
#[no_mangle]
pub unsafe extern "C" fn ds_mode_coverage(
    samples: *const f64,
    n: usize,
    centers: *const f64,
    k: usize,
    dim: usize,
    sigma: f64,
    min_count: usize,
    fraction: *mut f64,
    counts: *mut usize,
) -> DsStatus {
    guard(|| {
        let s = read_matrix(samples, n, dim, "samples")?;
        let c = read_matrix(centers, k, dim, "centers")?;
        let mc = eval::mode_coverage(&s, &c, sigma, min_count)?;
        *fraction.as_mut().ok_or_else(|| null("fraction"))? = mc.fraction;
        if !counts.is_null() {
            ptr::copy_nonoverlapping(mc.counts.as_ptr(), counts, k);
        }
        Ok(())
    })
}

/// Fraction of references within `tau` of some generated row.
///
/// # Safety
/// `generated` holds `n * dim`, `refs` holds `m * dim` doubles; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ds_holdout_recall(
    generated: *const f64,
    n: usize,
    refs: *const f64,
    m: usize,
    dim: usize,
    tau: f64,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let g = read_matrix(generated, n, dim, "generated")?;
        let r = read_matrix(refs, m, dim, "refs")?;
        let v = eval::holdout_recall(&g, &r, tau)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Run an experiment like `dualspace run`. `config_path` may be NULL;
/// `arm` is `"dual"`, `"direct"` or `"both"`.
///
/// # Safety
/// String arguments must be NULL (where allowed) or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ds_run_pipeline(
    config_path: *const c_char,
    arm: *const c_char,
    out_dir: *const c_char,
) -> DsStatus {
    guard(|| {
        let mut args = vec![
            "dualspace".to_string(),
            "run".into(),
            "--arm".into(),
            read_str(arm, "arm")?.into(),
            "--out".into(),
            read_str(out_dir, "out_dir")?.into(),
        ];
        if !config_path.is_null() {
            args.push("--config".into());
            args.push(read_str(config_path, "config_path")?.into());
        }
        let mut stdout = Vec::new();
        let mut stderr = Vec::new();
        let code = dualspace::cli::run_cli(args, &mut stdout, &mut stderr);
        let msg = || String::from_utf8_lossy(&stderr).trim().to_string();
        match code {
            dualspace::cli::EXIT_OK => Ok(()),
            dualspace::cli::EXIT_CONFIG => Err(Fail(DsStatus::Config, msg())),
            _ => Err(Fail(DsStatus::Runtime, msg())),
        }
    })
}
