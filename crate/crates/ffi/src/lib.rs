//! C ABI over `sitnet`.
//!
//! Every function returns a [`SitnetStatus`]. On failure, [`sitnet_last_error`]
//! describes the error for the calling thread. Strings handed out by this
//! library must be released with [`sitnet_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use sitnet::dsl::{parse_spec, DomainSpec};
use sitnet::net::{synthesize, PetriNet};
use sitnet::plan::{Goal, Plan};
use sitnet::planner::plan;
use sitnet::simulator::check_fix;
use sitnet::token::{check_trace, Session, SessionStatus, TokenError, TraceVerdict};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SitnetStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    SynthesisUnsupported = 4,
    InvalidTrace = 5,
    NoPlan = 6,
    Unrepairable = 7,
    InvalidChoice = 8,
    NotAwaiting = 9,
    UnsupportedNet = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SitnetFormat {
    Clausal = 0,
    Edges = 1,
    Dot = 2,
    Json = 3,
    Forks = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SitnetSessionState {
    Running = 0,
    AwaitingChoice = 1,
    Completed = 2,
    Stuck = 3,
    BudgetExceeded = 4,
    Unsafe = 5,
}

/// A parsed domain specification.
pub struct SitnetSpec {
    spec: DomainSpec,
}

/// A synthesized Petri net.
pub struct SitnetNet {
    net: Arc<PetriNet>,
}

/// An interactive traversal of a net.
pub struct SitnetSession {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn fail(status: SitnetStatus, msg: impl Into<String>) -> SitnetStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> SitnetStatus) -> SitnetStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SitnetStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, SitnetStatus> {
    if p.is_null() {
        return Err(fail(SitnetStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(SitnetStatus::InvalidUtf8, "argument is not UTF-8"))
}

/// # Safety
/// `out` is null or valid for writes.
unsafe fn write_string(out: *mut *mut c_char, s: String) -> SitnetStatus {
    if out.is_null() {
        return fail(SitnetStatus::NullArgument, "null output pointer");
    }
    *out = CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw();
    SitnetStatus::Ok
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(SitnetStatus::NullArgument, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message for the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn sitnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` is null or was returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sitnet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `text` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sitnet_spec_parse(text: *const c_char, out: *mut *mut SitnetSpec) -> SitnetStatus {
    guard(|| {
        non_null!(out);
        let text = try_ffi!(read_str(text));
        match parse_spec(text) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(SitnetSpec { spec }));
                SitnetStatus::Ok
            }
            Err(e) => fail(SitnetStatus::ParseError, e.to_string()),
        }
    })
}

/// # Safety
/// `spec` is null or came from [`sitnet_spec_parse`] and was not freed.
#[no_mangle]
pub unsafe extern "C" fn sitnet_spec_free(spec: *mut SitnetSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// # Safety
/// `spec` is a live spec handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sitnet_net_synthesize(spec: *const SitnetSpec, out: *mut *mut SitnetNet) -> SitnetStatus {
    guard(|| {
        non_null!(spec, out);
        match synthesize(&(*spec).spec) {
            Ok(net) => {
                *out = Box::into_raw(Box::new(SitnetNet { net: Arc::new(net) }));
                SitnetStatus::Ok
            }
            Err(e) => fail(SitnetStatus::SynthesisUnsupported, e.to_string()),
        }
    })
}

/// # Safety
/// `net` is null or came from [`sitnet_net_synthesize`] and was not freed.
#[no_mangle]
pub unsafe extern "C" fn sitnet_net_free(net: *mut SitnetNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` is a live net handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sitnet_net_render(
    net: *const SitnetNet,
    format: SitnetFormat,
    out: *mut *mut c_char,
) -> SitnetStatus {
    guard(|| {
        non_null!(net);
        let n = &(*net).net;
        let text = match format {
            SitnetFormat::Clausal => n.render_clausal(),
            SitnetFormat::Edges => n.render_edges(),
            SitnetFormat::Dot => n.render_dot(),
            SitnetFormat::Json => n.render_json(),
            SitnetFormat::Forks => n.render_forks(),
        };
        write_string(out, text)
    })
}

/// `Ok` for a valid trace, `InvalidTrace` otherwise, with the 1-based failing position in `position`.
///
/// # Safety
/// `net` is a live net handle; `trace` is a NUL-terminated string; `position` is null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sitnet_check_trace(
    net: *const SitnetNet,
    trace: *const c_char,
    position: *mut usize,
) -> SitnetStatus {
    guard(|| {
        non_null!(net);
        let trace = try_ffi!(read_str(trace));
        let verdict = check_trace(&(*net).net, trace);
        let at = match &verdict {
            TraceVerdict::Valid => 0,
            TraceVerdict::Invalid { position, .. } => *position,
        };
        if !position.is_null() {
            *position = at;
        }
        if verdict.is_valid() {
            SitnetStatus::Ok
        } else {
            fail(SitnetStatus::InvalidTrace, verdict.to_string())
        }
    })
}

/// Up to `max_plans` plans for `goal`, one per line.
///
/// # Safety
/// `spec` is a live spec handle; `goal` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sitnet_plan(
    spec: *const SitnetSpec,
    goal: *const c_char,
    max_depth: usize,
    max_plans: usize,
    out: *mut *mut c_char,
) -> SitnetStatus {
    guard(|| {
        non_null!(spec, out);
        let goal = try_ffi!(read_str(goal));
        let goal = match Goal::parse(goal) {
            Ok(g) => g,
            Err(e) => return fail(SitnetStatus::ParseError, e.to_string()),
        };
        let lines: Vec<String> = plan(&goal, &(*spec).spec, max_depth).take(max_plans).map(|p| p.plan.to_string()).collect();
        if lines.is_empty() {
            return fail(SitnetStatus::NoPlan, "no plan within the depth bound");
        }
        write_string(out, lines.join("\n") + "\n")
    })
}

/// Repair transcript for `plan`.
///
/// # Safety
/// `spec` is a live spec handle; `plan` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sitnet_check_fix(
    spec: *const SitnetSpec,
    plan_text: *const c_char,
    max_rounds: usize,
    out: *mut *mut c_char,
) -> SitnetStatus {
    guard(|| {
        non_null!(spec, out);
        let text = try_ffi!(read_str(plan_text));
        let spec = &(*spec).spec;
        let given = match Plan::parse(text, spec) {
            Ok(p) => p,
            Err(e) => return fail(SitnetStatus::ParseError, e.to_string()),
        };
        match check_fix(&given, spec, max_rounds) {
            Ok((_, log)) => write_string(out, log.transcript()),
            Err(e) => fail(SitnetStatus::Unrepairable, e.to_string()),
        }
    })
}

/// Starts a traversal and fires every forced step.
///
/// # Safety
/// `net` is a live net handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sitnet_session_start(
    net: *const SitnetNet,
    max_firings: usize,
    out: *mut *mut SitnetSession,
) -> SitnetStatus {
    guard(|| {
        non_null!(net, out);
        match Session::start((*net).net.clone(), max_firings) {
            Ok(mut session) => {
                session.advance();
                *out = Box::into_raw(Box::new(SitnetSession { session }));
                SitnetStatus::Ok
            }
            Err(e) => fail(SitnetStatus::UnsupportedNet, e.to_string()),
        }
    })
}

/// # Safety
/// `session` is null or came from [`sitnet_session_start`] and was not freed.
#[no_mangle]
pub unsafe extern "C" fn sitnet_session_free(session: *mut SitnetSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// # Safety
/// `session` is a live session handle.
#[no_mangle]
pub unsafe extern "C" fn sitnet_session_choose(session: *mut SitnetSession, label: c_char) -> SitnetStatus {
    guard(|| {
        non_null!(session);
        let label = label as u8 as char;
        match (*session).session.choose(label) {
            Ok(_) => SitnetStatus::Ok,
            Err(e @ TokenError::NotAwaiting) => fail(SitnetStatus::NotAwaiting, e.to_string()),
            Err(e) => fail(SitnetStatus::InvalidChoice, e.to_string()),
        }
    })
}

/// # Safety
/// `session` is a live session handle; `state` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sitnet_session_state(
    session: *const SitnetSession,
    state: *mut SitnetSessionState,
) -> SitnetStatus {
    guard(|| {
        non_null!(session, state);
        *state = match (*session).session.status() {
            SessionStatus::Running => SitnetSessionState::Running,
            SessionStatus::AwaitingChoice { .. } => SitnetSessionState::AwaitingChoice,
            SessionStatus::Completed => SitnetSessionState::Completed,
            SessionStatus::Stuck => SitnetSessionState::Stuck,
            SessionStatus::BudgetExceeded => SitnetSessionState::BudgetExceeded,
            SessionStatus::Unsafe { .. } => SitnetSessionState::Unsafe,
        };
        SitnetStatus::Ok
    })
}

/// Labels fired so far, e.g. `acde`.
///
/// # Safety
/// `session` is a live session handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sitnet_session_history(session: *const SitnetSession, out: *mut *mut c_char) -> SitnetStatus {
    guard(|| {
        non_null!(session);
        write_string(out, (*session).session.history().to_string())
    })
}

/// Current choice options as a label string, empty unless awaiting a choice.
///
/// # Safety
/// `session` is a live session handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sitnet_session_options(session: *const SitnetSession, out: *mut *mut c_char) -> SitnetStatus {
    guard(|| {
        non_null!(session);
        write_string(out, (*session).session.options().iter().collect())
    })
}

/// Plan text of the history, `start=>sig=>...`.
///
/// # Safety
/// `session` is a live session handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sitnet_session_plan(session: *const SitnetSession, out: *mut *mut c_char) -> SitnetStatus {
    guard(|| {
        non_null!(session);
        write_string(out, (*session).session.plan_text())
    })
}
