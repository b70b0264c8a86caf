//! C interface to `specmix`.
//!
//! Every fallible function returns a `SpecmixStatus`; on failure the message is
//! available from `specmix_last_error` on the same thread until the next call.
//! Objects are opaque handles created by `*_new` / `*_solve` and released with
//! the matching `*_free`. Matrices are column-major `double` arrays.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use specmix::assignment::{hungarian, CostMatrix};
use specmix::dictionary::{CountConstraint, CountKind, Dictionary};
use specmix::linalg::{Matrix, Metric};
use specmix::m2pals::{m2pals, M2palsOptions, UnmixingResult};
use specmix::spa::spa;
use specmix::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecmixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Infeasible = 4,
    Degenerate = 5,
    RankDeficient = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecmixCountKind {
    Exact = 0,
    AtMost = 1,
    AtLeast = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecmixMetric {
    Euclid = 0,
    Nip = 1,
    Mrsa = 2,
}

/// Iteration settings; fill with `specmix_options_default` before editing.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SpecmixOptions {
    pub max_iterations: usize,
    pub rel_change_tol: f64,
    pub nonnegative_b: bool,
    pub nonnegative_a_proxy: bool,
    pub metric: SpecmixMetric,
    pub seed: u64,
}

pub struct SpecmixMatrix(Matrix);

pub struct SpecmixProblem {
    data: Matrix,
    rank: usize,
    dicts: Vec<Dictionary>,
    constraints: Vec<CountConstraint>,
    options: M2palsOptions,
}

pub struct SpecmixResult(UnmixingResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

fn status_of(e: &Error) -> SpecmixStatus {
    match e {
        Error::DimensionMismatch { .. } => SpecmixStatus::DimensionMismatch,
        Error::Infeasible(_) => SpecmixStatus::Infeasible,
        Error::Degenerate(_) | Error::DistanceUndefined(_) => SpecmixStatus::Degenerate,
        Error::RankDeficient { .. } => SpecmixStatus::RankDeficient,
        Error::Contract(_) | Error::Parse(_) => SpecmixStatus::InvalidArgument,
        Error::Io(_) => SpecmixStatus::Internal,
    }
}

struct Fail(SpecmixStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SpecmixStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, converting errors and panics into a status plus the thread's message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SpecmixStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpecmixStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            SpecmixStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SpecmixStatus::InvalidArgument, msg.into())
}

/// Message for the last failed call on this thread, or null. The pointer stays
/// valid until the next `specmix_*` call on the same thread.
#[no_mangle]
pub extern "C" fn specmix_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static, nul-terminated library version.
#[no_mangle]
pub extern "C" fn specmix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ------------------------------------------------------------------ matrices

/// Copies `rows × cols` column-major values into a new matrix.
#[no_mangle]
pub unsafe extern "C" fn specmix_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut SpecmixMatrix,
) -> SpecmixStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let len = rows.checked_mul(cols).ok_or_else(|| invalid("rows × cols overflows"))?;
        let values = slice(data, len, "data")?.to_vec();
        let m = Matrix::from_col_major(rows, cols, values)?;
        *out = Box::into_raw(Box::new(SpecmixMatrix(m)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn specmix_matrix_free(m: *mut SpecmixMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Rows of `m`, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn specmix_matrix_rows(m: *const SpecmixMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// Columns of `m`, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn specmix_matrix_cols(m: *const SpecmixMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the column-major values of `m` into `out`, which must hold `len == rows·cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn specmix_matrix_copy(m: *const SpecmixMatrix, out: *mut f64, len: usize) -> SpecmixStatus {
    guard(|| {
        let m = deref(m, "m")?;
        let src = m.0.as_col_major();
        if len != src.len() {
            return Err(Fail(
                SpecmixStatus::DimensionMismatch,
                format!("buffer holds {len} values, matrix has {}", src.len()),
            ));
        }
        slice_mut(out, len, "out")?.copy_from_slice(src);
        Ok(())
    })
}

// ------------------------------------------------------------------ problems

#[no_mangle]
pub unsafe extern "C" fn specmix_options_default(out: *mut SpecmixOptions) -> SpecmixStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let d = M2palsOptions::default();
        *out = SpecmixOptions {
            max_iterations: d.max_iterations,
            rel_change_tol: d.rel_change_tol,
            nonnegative_b: d.nonnegative_b,
            nonnegative_a_proxy: d.nonnegative_a_proxy,
            metric: SpecmixMetric::Nip,
            seed: d.rng_seed,
        };
        Ok(())
    })
}

/// A problem over data `m` (bands × pixels, copied) with `rank` endmembers and default options.
#[no_mangle]
pub unsafe extern "C" fn specmix_problem_new(
    m: *const SpecmixMatrix,
    rank: usize,
    out: *mut *mut SpecmixProblem,
) -> SpecmixStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let m = deref(m, "m")?;
        if rank == 0 {
            return Err(invalid("rank must be positive"));
        }
        *out = Box::into_raw(Box::new(SpecmixProblem {
            data: m.0.clone(),
            rank,
            dicts: Vec::new(),
            constraints: Vec::new(),
            options: M2palsOptions::default(),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn specmix_problem_free(p: *mut SpecmixProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Appends a dictionary (bands × atoms, copied) with its count rule.
#[no_mangle]
pub unsafe extern "C" fn specmix_problem_add_dictionary(
    p: *mut SpecmixProblem,
    atoms: *const SpecmixMatrix,
    kind: SpecmixCountKind,
    count: usize,
) -> SpecmixStatus {
    guard(|| {
        let p = deref_mut(p, "problem")?;
        let atoms = deref(atoms, "atoms")?;
        if atoms.0.rows() != p.data.rows() {
            return Err(Fail(
                SpecmixStatus::DimensionMismatch,
                format!("dictionary has {} bands, data has {}", atoms.0.rows(), p.data.rows()),
            ));
        }
        let kind = match kind {
            SpecmixCountKind::Exact => CountKind::Exact,
            SpecmixCountKind::AtMost => CountKind::AtMost,
            SpecmixCountKind::AtLeast => CountKind::AtLeast,
        };
        let id = format!("d{}", p.dicts.len());
        p.dicts.push(Dictionary::external(id, atoms.0.clone()));
        p.constraints.push(CountConstraint { kind, count });
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn specmix_problem_set_options(p: *mut SpecmixProblem, opts: *const SpecmixOptions) -> SpecmixStatus {
    guard(|| {
        let p = deref_mut(p, "problem")?;
        let o = deref(opts, "opts")?;
        let options = M2palsOptions {
            max_iterations: o.max_iterations,
            rel_change_tol: o.rel_change_tol,
            nonnegative_b: o.nonnegative_b,
            nonnegative_a_proxy: o.nonnegative_a_proxy,
            metric: match o.metric {
                SpecmixMetric::Euclid => Metric::Euclid,
                SpecmixMetric::Nip => Metric::Nip,
                SpecmixMetric::Mrsa => Metric::Mrsa,
            },
            rng_seed: o.seed,
            ..M2palsOptions::default()
        };
        options.validate()?;
        p.options = options;
        Ok(())
    })
}

/// Runs the alternating factorization; on success `*out` owns the result.
#[no_mangle]
pub unsafe extern "C" fn specmix_problem_solve(p: *const SpecmixProblem, out: *mut *mut SpecmixResult) -> SpecmixStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let p = deref(p, "problem")?;
        let res = m2pals(&p.data, &p.dicts, &p.constraints, p.rank, &p.options)?;
        *out = Box::into_raw(Box::new(SpecmixResult(res)));
        Ok(())
    })
}

// ------------------------------------------------------------------ results

#[no_mangle]
pub unsafe extern "C" fn specmix_result_free(r: *mut SpecmixResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Number of endmembers, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn specmix_result_rank(r: *const SpecmixResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.a.cols())
}

/// `‖M − A·Bᵀ‖_F / ‖M‖_F` of the returned factors, or NaN for null.
#[no_mangle]
pub unsafe extern "C" fn specmix_result_relative_error(r: *const SpecmixResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.0.relative_error)
}

#[no_mangle]
pub unsafe extern "C" fn specmix_result_iterations(r: *const SpecmixResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.iterations)
}

#[no_mangle]
pub unsafe extern "C" fn specmix_result_converged(r: *const SpecmixResult) -> bool {
    r.as_ref().is_some_and(|r| r.0.converged)
}

/// New matrix holding `A` (bands × rank).
#[no_mangle]
pub unsafe extern "C" fn specmix_result_endmembers(r: *const SpecmixResult, out: *mut *mut SpecmixMatrix) -> SpecmixStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(Box::new(SpecmixMatrix(deref(r, "result")?.0.a.clone())));
        Ok(())
    })
}

/// New matrix holding `B` (pixels × rank).
#[no_mangle]
pub unsafe extern "C" fn specmix_result_abundances(r: *const SpecmixResult, out: *mut *mut SpecmixMatrix) -> SpecmixStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(Box::new(SpecmixMatrix(deref(r, "result")?.0.b.clone())));
        Ok(())
    })
}

/// For every endmember `k < len`, the dictionary (in insertion order) and atom it was taken from.
#[no_mangle]
pub unsafe extern "C" fn specmix_result_selection(
    r: *const SpecmixResult,
    dictionaries: *mut usize,
    atoms: *mut usize,
    len: usize,
) -> SpecmixStatus {
    guard(|| {
        let r = deref(r, "result")?;
        let sources = &r.0.sources;
        if len != sources.len() {
            return Err(Fail(
                SpecmixStatus::DimensionMismatch,
                format!("buffers hold {len} entries, rank is {}", sources.len()),
            ));
        }
        let d = slice_mut(dictionaries, len, "dictionaries")?;
        let a = slice_mut(atoms, len, "atoms")?;
        for (k, s) in sources.iter().enumerate() {
            d[k] = s.dictionary;
            a[k] = s.atom;
        }
        Ok(())
    })
}

// ------------------------------------------------------------------ building blocks

/// Successive projection: writes `r` column indices of `m` into `indices`.
#[no_mangle]
pub unsafe extern "C" fn specmix_spa(m: *const SpecmixMatrix, r: usize, indices: *mut usize) -> SpecmixStatus {
    guard(|| {
        let m = deref(m, "m")?;
        let out = slice_mut(indices, r, "indices")?;
        let res = spa(&m.0, r)?;
        out.copy_from_slice(&res.indices);
        Ok(())
    })
}

/// Minimum-cost assignment of each of `rows` rows to a distinct column of the
/// row-major `rows × cols` table (`rows ≤ cols`).
#[no_mangle]
pub unsafe extern "C" fn specmix_hungarian(
    rows: usize,
    cols: usize,
    costs: *const f64,
    assignment: *mut usize,
    total_cost: *mut f64,
) -> SpecmixStatus {
    guard(|| {
        let len = rows.checked_mul(cols).ok_or_else(|| invalid("rows × cols overflows"))?;
        let table = CostMatrix::new(rows, cols, slice(costs, len, "costs")?.to_vec())?;
        let out = slice_mut(assignment, rows, "assignment")?;
        let sol = hungarian(&table)?;
        out.copy_from_slice(&sol.assignment);
        if let Some(t) = total_cost.as_mut() {
            *t = sol.total_cost;
        }
        Ok(())
    })
}
