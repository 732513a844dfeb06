//! C ABI for the profinitek library: opaque handles over completion chains
//! and K-data, status codes for every failure path, and JSON bridges in the
//! project fixture format.
//!
//! Every function is panic-safe; on any non-OK status the thread-local
//! message retrieved by [`pfk_last_error_message`] describes the failure.
//! Strings returned through out-parameters are owned by the caller and must
//! be released with [`pfk_string_free`].

use profinitek::completions::{cofinal_equivalent, CompletionChain};
use profinitek::fixtures::{
    chain_from_value, chain_to_value, ksubgroup_from_value, ksubgroup_to_value,
    to_canonical_string,
};
use profinitek::gen::seeded_fixture;
use profinitek::kgroups::{k_from_chain, KSubgroup};
use profinitek::recon::{reconstruct_appendix, reconstruct_pro_n};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PfkStatus {
    PfkOk = 0,
    PfkInvalidArgument = 1,
    PfkParseError = 2,
    PfkReconstructionError = 3,
    PfkInternalError = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Borrowed pointer to the thread-local message for the most recent
/// failure; valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pfk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Opaque completion chain handle.
pub struct PfkChain {
    inner: CompletionChain,
}

/// Opaque K-data handle.
pub struct PfkKData {
    inner: KSubgroup,
}

fn guard<T>(out: *mut *mut T, body: impl FnOnce() -> Result<T, (PfkStatus, String)>) -> PfkStatus {
    if out.is_null() {
        set_error("output pointer is null");
        return PfkStatus::PfkInvalidArgument;
    }
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(value)) => {
            unsafe { *out = Box::into_raw(Box::new(value)) };
            PfkStatus::PfkOk
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PfkStatus::PfkInternalError
        }
    }
}

fn guard_string(
    out: *mut *mut c_char,
    body: impl FnOnce() -> Result<String, (PfkStatus, String)>,
) -> PfkStatus {
    if out.is_null() {
        set_error("output pointer is null");
        return PfkStatus::PfkInvalidArgument;
    }
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(text)) => match CString::new(text) {
            Ok(c) => {
                unsafe { *out = c.into_raw() };
                PfkStatus::PfkOk
            }
            Err(e) => {
                set_error(&e.to_string());
                PfkStatus::PfkInternalError
            }
        },
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PfkStatus::PfkInternalError
        }
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, (PfkStatus, String)> {
    if ptr.is_null() {
        return Err((PfkStatus::PfkInvalidArgument, "string pointer is null".into()));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| (PfkStatus::PfkInvalidArgument, format!("invalid UTF-8: {e}")))
}

/// Generates the seeded completion-chain fixture with the given shape
/// parameters. `primes` points at `n_primes` prime numbers.
///
/// # Safety
/// `primes` must be valid for `n_primes` reads and `out` must be a valid
/// destination pointer.
#[no_mangle]
pub unsafe extern "C" fn pfk_chain_generate(
    seed: u64,
    rank: usize,
    primes: *const u64,
    n_primes: usize,
    depth: usize,
    max_exp: u32,
    out: *mut *mut PfkChain,
) -> PfkStatus {
    if primes.is_null() || n_primes == 0 {
        set_error("at least one prime is required");
        return PfkStatus::PfkInvalidArgument;
    }
    let prime_set: std::collections::BTreeSet<u64> =
        std::slice::from_raw_parts(primes, n_primes).iter().copied().collect();
    guard(out, || {
        if rank == 0 || depth == 0 {
            return Err((
                PfkStatus::PfkInvalidArgument,
                "rank and depth must be positive".into(),
            ));
        }
        let (_, chain) = seeded_fixture(seed, rank, &prime_set, depth, max_exp);
        Ok(PfkChain { inner: chain })
    })
}

/// Parses a chain from its JSON fixture representation.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid
/// destination pointer.
#[no_mangle]
pub unsafe extern "C" fn pfk_chain_from_json(
    json: *const c_char,
    out: *mut *mut PfkChain,
) -> PfkStatus {
    let text = match read_str(json) {
        Ok(t) => t.to_string(),
        Err((s, m)) => {
            set_error(&m);
            return s;
        }
    };
    guard(out, || {
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| (PfkStatus::PfkParseError, format!("bad JSON: {e}")))?;
        let chain =
            chain_from_value(&value).map_err(|e| (PfkStatus::PfkParseError, e.to_string()))?;
        Ok(PfkChain { inner: chain })
    })
}

/// Serializes a chain into the canonical JSON fixture text.
///
/// # Safety
/// `chain` must be a live handle and `out` a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn pfk_chain_to_json(
    chain: *const PfkChain,
    out: *mut *mut c_char,
) -> PfkStatus {
    if chain.is_null() {
        set_error("chain handle is null");
        return PfkStatus::PfkInvalidArgument;
    }
    guard_string(out, || Ok(to_canonical_string(&chain_to_value(&(*chain).inner))))
}

/// Number of stored levels; zero for a null handle.
///
/// # Safety
/// `chain` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pfk_chain_depth(chain: *const PfkChain) -> usize {
    if chain.is_null() {
        return 0;
    }
    (*chain).inner.depth()
}

/// Ambient rank of the chain; zero for a null handle.
///
/// # Safety
/// `chain` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pfk_chain_ambient_rank(chain: *const PfkChain) -> usize {
    if chain.is_null() {
        return 0;
    }
    (*chain).inner.ambient_rank()
}

/// Computes the K-data of a chain up to the given exterior degree.
///
/// # Safety
/// `chain` must be a live handle and `out` a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn pfk_kdata_from_chain(
    chain: *const PfkChain,
    max_degree: usize,
    out: *mut *mut PfkKData,
) -> PfkStatus {
    if chain.is_null() {
        set_error("chain handle is null");
        return PfkStatus::PfkInvalidArgument;
    }
    guard(out, || {
        Ok(PfkKData {
            inner: k_from_chain(&(*chain).inner, max_degree),
        })
    })
}

/// Parses K-data from its JSON dump; `strip_provenance != 0` loads it as
/// plain invariant data carrying no certification.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid
/// destination pointer.
#[no_mangle]
pub unsafe extern "C" fn pfk_kdata_from_json(
    json: *const c_char,
    strip_provenance: u8,
    out: *mut *mut PfkKData,
) -> PfkStatus {
    let text = match read_str(json) {
        Ok(t) => t.to_string(),
        Err((s, m)) => {
            set_error(&m);
            return s;
        }
    };
    guard(out, || {
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| (PfkStatus::PfkParseError, format!("bad JSON: {e}")))?;
        let k = ksubgroup_from_value(&value, strip_provenance != 0)
            .map_err(|e| (PfkStatus::PfkParseError, e.to_string()))?;
        Ok(PfkKData { inner: k })
    })
}

/// Serializes K-data into the canonical JSON dump text.
///
/// # Safety
/// `kdata` must be a live handle and `out` a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn pfk_kdata_to_json(
    kdata: *const PfkKData,
    out: *mut *mut c_char,
) -> PfkStatus {
    if kdata.is_null() {
        set_error("kdata handle is null");
        return PfkStatus::PfkInvalidArgument;
    }
    guard_string(out, || {
        Ok(to_canonical_string(&ksubgroup_to_value(&(*kdata).inner)))
    })
}

/// Reconstructs a completion chain from K-data by per-prime restriction and
/// the level-intersection search.
///
/// # Safety
/// `kdata` must be a live handle and `out` a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn pfk_reconstruct_pro_n(
    kdata: *const PfkKData,
    depth: usize,
    coeff_bound: i64,
    budget: usize,
    out: *mut *mut PfkChain,
) -> PfkStatus {
    if kdata.is_null() {
        set_error("kdata handle is null");
        return PfkStatus::PfkInvalidArgument;
    }
    guard(out, || {
        reconstruct_pro_n(&(*kdata).inner, depth, coeff_bound, budget)
            .map(|inner| PfkChain { inner })
            .map_err(|e| (PfkStatus::PfkReconstructionError, e.to_string()))
    })
}

/// Reconstructs a completion chain through the codegree-one identification.
///
/// # Safety
/// `kdata` must be a live handle and `out` a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn pfk_reconstruct_appendix(
    kdata: *const PfkKData,
    depth: usize,
    out: *mut *mut PfkChain,
) -> PfkStatus {
    if kdata.is_null() {
        set_error("kdata handle is null");
        return PfkStatus::PfkInvalidArgument;
    }
    guard(out, || {
        reconstruct_appendix(&(*kdata).inner, depth)
            .map(|inner| PfkChain { inner })
            .map_err(|e| (PfkStatus::PfkReconstructionError, e.to_string()))
    })
}

/// Mutual-cofinality verdict between two chains at the given probe depth;
/// writes 1 for equivalent and 0 otherwise.
///
/// # Safety
/// Both handles must be live and `out` a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn pfk_cofinal_equivalent(
    left: *const PfkChain,
    right: *const PfkChain,
    depth: usize,
    out: *mut u8,
) -> PfkStatus {
    if left.is_null() || right.is_null() || out.is_null() {
        set_error("null pointer argument");
        return PfkStatus::PfkInvalidArgument;
    }
    let (l, r) = (&(*left).inner, &(*right).inner);
    if l.ambient_rank() != r.ambient_rank() {
        set_error("chains live in different ambient ranks");
        return PfkStatus::PfkInvalidArgument;
    }
    match catch_unwind(AssertUnwindSafe(|| {
        cofinal_equivalent(l, r, depth).is_equivalent()
    })) {
        Ok(v) => {
            *out = u8::from(v);
            PfkStatus::PfkOk
        }
        Err(_) => {
            set_error("internal panic");
            PfkStatus::PfkInternalError
        }
    }
}

/// Releases a chain handle. Null is ignored.
///
/// # Safety
/// `chain` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pfk_chain_free(chain: *mut PfkChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Releases a K-data handle. Null is ignored.
///
/// # Safety
/// `kdata` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pfk_kdata_free(kdata: *mut PfkKData) {
    if !kdata.is_null() {
        drop(Box::from_raw(kdata));
    }
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pfk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
