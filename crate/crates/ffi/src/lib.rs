//! C interface to cascast: frame files, synthetic data, checkpoints and forecasting.
//!
//! Every function returns a [`CascastStatus`]. On failure a description is
//! available from [`cascast_last_error`] until the next failing call on the
//! same thread. Objects are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use cascast::data::{denormalize, load_frames, normalize, plan_tiles, save_frames, synth_generate, FrameSequence, SynthConfig, TileGrid};
use cascast::eval::forecast;
use cascast::seq2seq::{load_checkpoint, Seq2Seq};
use cascast::{Error, Tensor4};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CascastStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Config = 6,
    CheckpointMismatch = 7,
    InsufficientHistory = 8,
    Numeric = 9,
    Panic = 10,
}

/// Frame sequence handle.
pub struct CascastFrames(FrameSequence);

/// Trained model handle.
pub struct CascastModel(Seq2Seq<f32>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CascastStatus {
    match e {
        Error::ShapeMismatch { .. } => CascastStatus::Shape,
        Error::Empty(_) | Error::InvalidArgument(_) => CascastStatus::InvalidArgument,
        Error::InsufficientHistory { .. } => CascastStatus::InsufficientHistory,
        Error::BadMagic { .. } | Error::UnsupportedVersion { .. } | Error::Truncated { .. } | Error::Malformed(_) => {
            CascastStatus::Format
        }
        Error::CheckpointMismatch(_) => CascastStatus::CheckpointMismatch,
        Error::NonFiniteLoss { .. } => CascastStatus::Numeric,
        Error::Config(_) => CascastStatus::Config,
        Error::Io { .. } => CascastStatus::Io,
    }
}

struct Fail(CascastStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CascastStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CascastStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CascastStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(CascastStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CascastStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Description of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cascast_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn cascast_status_name(status: CascastStatus) -> *const c_char {
    let s: &'static CStr = match status {
        CascastStatus::Ok => c"ok",
        CascastStatus::NullPointer => c"null pointer",
        CascastStatus::InvalidArgument => c"invalid argument",
        CascastStatus::Io => c"i/o error",
        CascastStatus::Format => c"bad file format",
        CascastStatus::Shape => c"shape mismatch",
        CascastStatus::Config => c"invalid configuration",
        CascastStatus::CheckpointMismatch => c"checkpoint mismatch",
        CascastStatus::InsufficientHistory => c"insufficient history",
        CascastStatus::Numeric => c"non-finite value",
        CascastStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Reads a frame file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cascast_frames_load(path: *const c_char, out: *mut *mut CascastFrames) -> CascastStatus {
    guard(|| {
        let p = path_arg(path)?;
        put(out, CascastFrames(load_frames(&p)?))
    })
}

/// Writes a frame file.
///
/// # Safety
/// `frames` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cascast_frames_save(frames: *const CascastFrames, path: *const c_char) -> CascastStatus {
    guard(|| {
        let f = handle(frames, "frames")?;
        save_frames(&f.0, &path_arg(path)?)?;
        Ok(())
    })
}

/// Builds a sequence from `count` raw frames of shape (3, height, width) in
/// channel-major byte layout.
///
/// # Safety
/// `pixels` must point to `len` readable bytes and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cascast_frames_from_raw(
    pixels: *const u8,
    len: usize,
    count: usize,
    height: usize,
    width: usize,
    start_timestamp: u32,
    stride_minutes: u32,
    out: *mut *mut CascastFrames,
) -> CascastStatus {
    guard(|| {
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        let per = 3usize
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Fail(CascastStatus::InvalidArgument, "frame size overflows".into()))?;
        if per.checked_mul(count) != Some(len) {
            return Err(Fail(
                CascastStatus::Shape,
                format!("{len} bytes do not hold {count} frames of 3x{height}x{width}"),
            ));
        }
        let raw = std::slice::from_raw_parts(pixels, len);
        let frames = raw
            .chunks(per.max(1))
            .take(count)
            .map(|c| Tensor4::new([1, 3, height, width], normalize(c)))
            .collect::<Result<Vec<_>, _>>()?;
        let seq = FrameSequence::from_pixels(start_timestamp, stride_minutes, height, width, frames)?;
        put(out, CascastFrames(seq))
    })
}

/// Generates a synthetic sequence with default scene settings.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cascast_frames_synthetic(
    height: usize,
    width: usize,
    count: usize,
    seed: u64,
    out: *mut *mut CascastFrames,
) -> CascastStatus {
    guard(|| {
        let cfg = SynthConfig {
            height,
            width,
            num_frames: count,
            seed,
            ..SynthConfig::default()
        };
        put(out, CascastFrames(synth_generate(&cfg)?))
    })
}

/// Number of frames, or 0 for a null handle.
///
/// # Safety
/// `frames` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cascast_frames_len(frames: *const CascastFrames) -> usize {
    frames.as_ref().map_or(0, |f| f.0.len())
}

/// Frame height and width.
///
/// # Safety
/// `frames` must be a live handle; `height` and `width` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cascast_frames_dims(
    frames: *const CascastFrames,
    height: *mut usize,
    width: *mut usize,
) -> CascastStatus {
    guard(|| {
        let f = handle(frames, "frames")?;
        if height.is_null() || width.is_null() {
            return Err(null("height or width"));
        }
        *height = f.0.height;
        *width = f.0.width;
        Ok(())
    })
}

/// Timestamp in minutes of frame `index`.
///
/// # Safety
/// `frames` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cascast_frames_timestamp(
    frames: *const CascastFrames,
    index: usize,
    out: *mut u32,
) -> CascastStatus {
    guard(|| {
        let f = handle(frames, "frames")?;
        let frame = f.0.frames.get(index).ok_or_else(|| {
            Fail(CascastStatus::InvalidArgument, format!("index {index} out of range for {} frames", f.0.len()))
        })?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = frame.timestamp;
        Ok(())
    })
}

/// Copies frame `index` as bytes in (3, height, width) layout into `buf`,
/// which must hold exactly `3 * height * width` bytes.
///
/// # Safety
/// `frames` must be a live handle and `buf` point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cascast_frames_copy_pixels(
    frames: *const CascastFrames,
    index: usize,
    buf: *mut u8,
    len: usize,
) -> CascastStatus {
    guard(|| {
        let f = handle(frames, "frames")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if index >= f.0.len() {
            return Err(Fail(
                CascastStatus::InvalidArgument,
                format!("index {index} out of range for {} frames", f.0.len()),
            ));
        }
        let bytes = denormalize(f.0.pixels(index).data());
        if bytes.len() != len {
            return Err(Fail(CascastStatus::Shape, format!("buffer holds {len} bytes, frame has {}", bytes.len())));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(&bytes);
        Ok(())
    })
}

/// Releases a frame handle. Null is ignored.
///
/// # Safety
/// `frames` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cascast_frames_free(frames: *mut CascastFrames) {
    if !frames.is_null() {
        drop(Box::from_raw(frames));
    }
}

/// Reads a checkpoint.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cascast_model_load(path: *const c_char, out: *mut *mut CascastModel) -> CascastStatus {
    guard(|| {
        let p = path_arg(path)?;
        put(out, CascastModel(load_checkpoint(&p)?))
    })
}

/// Input and output sequence lengths of a model.
///
/// # Safety
/// `model` must be a live handle; `in_len` and `out_len` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cascast_model_lengths(
    model: *const CascastModel,
    in_len: *mut usize,
    out_len: *mut usize,
) -> CascastStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if in_len.is_null() || out_len.is_null() {
            return Err(null("in_len or out_len"));
        }
        *in_len = m.0.config.in_len;
        *out_len = m.0.config.out_len;
        Ok(())
    })
}

/// Forecasts the frames following frame `index` of `frames`. Frames are split
/// into `tile_h` x `tile_w` tiles; zero for both uses whole frames.
///
/// # Safety
/// `model` and `frames` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cascast_model_predict(
    model: *const CascastModel,
    frames: *const CascastFrames,
    index: usize,
    tile_h: usize,
    tile_w: usize,
    out: *mut *mut CascastFrames,
) -> CascastStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let f = handle(frames, "frames")?;
        let grid = if tile_h == 0 && tile_w == 0 {
            TileGrid::whole(f.0.height, f.0.width)?
        } else {
            plan_tiles(f.0.height, f.0.width, tile_h, tile_w)?
        };
        put(out, CascastFrames(forecast(&m.0, &f.0, index, &grid)?))
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cascast_model_free(model: *mut CascastModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
