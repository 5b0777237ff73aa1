//! C ABI over the restoration environment, policies and benchmark functions.
//!
//! Objects cross the boundary as opaque pointers created by `*_new`/`*_load`
//! functions and released by the matching `*_free`. Every fallible call
//! returns a [`ClrStatus`]; on failure [`clr_last_error`] describes the cause.
//! Arrays are passed as pointer plus length and copied, never retained.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use clrmeta::env::{self, EnvState};
use clrmeta::grid::{ieee123_analog, ieee13_analog};
use clrmeta::policy::{init_params, Checkpoint, Normalizer, PolicyParams};
use clrmeta::scenario::{make_task_family, ForecastTensor, Scenario, Task, TaskFamilySpec};
use clrmeta::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClrStatus {
    Ok = 0,
    InvalidInput = 1,
    Structural = 2,
    Lifecycle = 3,
    Io = 4,
    NullPointer = 5,
    BufferTooSmall = 6,
    Busy = 7,
    Panic = 8,
}

/// A restoration task (feeder, demands, renewable profiles).
pub struct ClrTask {
    task: Task,
}

/// An episode in progress on a private copy of a task.
pub struct ClrEnv {
    task: Task,
    forecasts: Vec<ForecastTensor>,
    state: EnvState,
}

/// Feed-forward policy parameters.
pub struct ClrPolicy {
    params: PolicyParams,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> ClrStatus {
    match err {
        Error::Input(_) | Error::Json(_) | Error::Csv(_) => ClrStatus::InvalidInput,
        Error::Structural(_) => ClrStatus::Structural,
        Error::Lifecycle(_) => ClrStatus::Lifecycle,
        Error::Busy(_) => ClrStatus::Busy,
        Error::Io(_) => ClrStatus::Io,
    }
}

fn fail(status: ClrStatus, msg: &str) -> ClrStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), ClrStatus>) -> ClrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ClrStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(ClrStatus::Panic, "internal panic"),
    }
}

fn lib<T>(r: clrmeta::Result<T>) -> Result<T, ClrStatus> {
    r.map_err(|e| fail(status_of(&e), &e.to_string()))
}

fn nonnull<T>(p: *const T, what: &str) -> Result<(), ClrStatus> {
    if p.is_null() {
        Err(fail(ClrStatus::NullPointer, &format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, ClrStatus> {
    nonnull(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ClrStatus::InvalidInput, &format!("{what} is not UTF-8")))
}

unsafe fn in_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], ClrStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    nonnull(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize, what: &str) -> Result<(), ClrStatus> {
    if len < src.len() {
        return Err(fail(
            ClrStatus::BufferTooSmall,
            &format!("{what} holds {len} values, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        nonnull(dst, what)?;
        ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    }
    Ok(())
}

/// Message for the most recent failure on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn clr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn clr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds task `index` of a generated family on a built-in feeder
/// (`"ieee13"` or `"ieee123"`).
///
/// # Safety
/// `system` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clr_task_new(
    system: *const c_char,
    family_seed: u64,
    index: usize,
    horizon: usize,
    error_level: f64,
    out: *mut *mut ClrTask,
) -> ClrStatus {
    guard(|| {
        nonnull(out, "out")?;
        let grid = match c_str(system, "system")? {
            "ieee13" => ieee13_analog(),
            "ieee123" => ieee123_analog(),
            other => return Err(fail(ClrStatus::InvalidInput, &format!("unknown system '{other}'"))),
        };
        let spec = TaskFamilySpec {
            count: index + 1,
            horizon,
            error_level,
            seed: family_seed,
            ..TaskFamilySpec::default()
        };
        let task = lib(make_task_family(&grid, &spec))?.swap_remove(index);
        *out = Box::into_raw(Box::new(ClrTask { task }));
        Ok(())
    })
}

/// Parses a task from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clr_task_from_json(json: *const c_char, out: *mut *mut ClrTask) -> ClrStatus {
    guard(|| {
        nonnull(out, "out")?;
        let task: Task = lib(serde_json::from_str(c_str(json, "json")?).map_err(Error::from))?;
        lib(task.validate())?;
        *out = Box::into_raw(Box::new(ClrTask { task }));
        Ok(())
    })
}

/// # Safety
/// `task` must come from a task constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn clr_task_free(task: *mut ClrTask) {
    if !task.is_null() {
        drop(Box::from_raw(task));
    }
}

/// Observation length, or 0 for a null task.
///
/// # Safety
/// `task` must be null or a live task.
#[no_mangle]
pub unsafe extern "C" fn clr_task_state_dim(task: *const ClrTask) -> usize {
    task.as_ref().map_or(0, |t| env::state_dim(&t.task))
}

/// Raw action length, or 0 for a null task.
///
/// # Safety
/// `task` must be null or a live task.
#[no_mangle]
pub unsafe extern "C" fn clr_task_action_dim(task: *const ClrTask) -> usize {
    task.as_ref().map_or(0, |t| env::action_dim(&t.task.system))
}

/// Number of control steps per episode, or 0 for a null task.
///
/// # Safety
/// `task` must be null or a live task.
#[no_mangle]
pub unsafe extern "C" fn clr_task_horizon(task: *const ClrTask) -> usize {
    task.as_ref().map_or(0, |t| t.task.horizon)
}

/// Starts an episode. `resample` selects fresh forecast noise from `scenario_seed`;
/// otherwise the task's stored forecasts are used.
///
/// # Safety
/// `task` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clr_env_new(
    task: *const ClrTask,
    resample: bool,
    scenario_seed: u64,
    out: *mut *mut ClrEnv,
) -> ClrStatus {
    guard(|| {
        nonnull(task, "task")?;
        nonnull(out, "out")?;
        let task = (*task).task.clone();
        let scenario = if resample {
            Scenario::Resample(scenario_seed)
        } else {
            Scenario::Stored
        };
        let forecasts = task.episode_forecasts(scenario).into_owned();
        let state = env::reset_with(&task, &forecasts);
        *out = Box::into_raw(Box::new(ClrEnv {
            task,
            forecasts,
            state,
        }));
        Ok(())
    })
}

/// # Safety
/// `env` must come from [`clr_env_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn clr_env_free(env: *mut ClrEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Restarts the episode and writes the initial observation.
///
/// # Safety
/// `env` must be live; `state_out` must hold `state_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn clr_env_reset(env: *mut ClrEnv, state_out: *mut f64, state_len: usize) -> ClrStatus {
    guard(|| {
        nonnull(env, "env")?;
        let e = &mut *env;
        e.state = env::reset_with(&e.task, &e.forecasts);
        copy_out(&e.state.to_vector(), state_out, state_len, "state_out")
    })
}

/// Applies a raw action in `[-1, 1]^action_dim` and writes the next
/// observation, the reward and whether the episode is over.
///
/// # Safety
/// `env` must be live; buffers must hold the stated lengths; `reward` and
/// `done` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clr_env_step(
    env: *mut ClrEnv,
    raw: *const f64,
    raw_len: usize,
    state_out: *mut f64,
    state_len: usize,
    reward: *mut f64,
    done: *mut c_int,
) -> ClrStatus {
    guard(|| {
        nonnull(env, "env")?;
        nonnull(reward, "reward")?;
        nonnull(done, "done")?;
        let e = &mut *env;
        let raw = in_slice(raw, raw_len, "raw")?;
        let outcome = lib(env::step(&e.state, raw, &e.task, &e.forecasts))?;
        copy_out(&outcome.state.to_vector(), state_out, state_len, "state_out")?;
        *reward = outcome.reward;
        *done = c_int::from(outcome.state.is_terminal(&e.task));
        e.state = outcome.state;
        Ok(())
    })
}

/// Fresh policy with hidden layer sizes `hidden[0..n_hidden]`. When `task`
/// is non-null its input normalizer is attached.
///
/// # Safety
/// `hidden` must hold `n_hidden` values; `task` must be null or live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clr_policy_new(
    d_in: usize,
    d_out: usize,
    hidden: *const usize,
    n_hidden: usize,
    seed: u64,
    task: *const ClrTask,
    out: *mut *mut ClrPolicy,
) -> ClrStatus {
    guard(|| {
        nonnull(out, "out")?;
        let hidden: &[usize] = if n_hidden == 0 {
            &[]
        } else {
            nonnull(hidden, "hidden")?;
            std::slice::from_raw_parts(hidden, n_hidden)
        };
        let mut params = lib(init_params(d_in, d_out, hidden, seed))?;
        if let Some(t) = task.as_ref() {
            let norm = Normalizer::for_task(&t.task);
            if norm.dim() != d_in {
                return Err(fail(ClrStatus::InvalidInput, "d_in does not match the task's state dimension"));
            }
            params.normalizer = norm;
        }
        *out = Box::into_raw(Box::new(ClrPolicy { params }));
        Ok(())
    })
}

/// Loads a policy checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clr_policy_load(path: *const c_char, out: *mut *mut ClrPolicy) -> ClrStatus {
    guard(|| {
        nonnull(out, "out")?;
        let ck = lib(Checkpoint::load(Path::new(c_str(path, "path")?)))?;
        *out = Box::into_raw(Box::new(ClrPolicy { params: ck.params }));
        Ok(())
    })
}

/// Writes a policy checkpoint file.
///
/// # Safety
/// `policy` must be live; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn clr_policy_save(policy: *const ClrPolicy, path: *const c_char) -> ClrStatus {
    guard(|| {
        nonnull(policy, "policy")?;
        let ck = Checkpoint {
            params: (*policy).params.clone(),
            lineage: vec!["saved through the C interface".into()],
        };
        lib(ck.save(Path::new(c_str(path, "path")?)))
    })
}

/// # Safety
/// `policy` must come from a policy constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn clr_policy_free(policy: *mut ClrPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Number of parameters, or 0 for a null policy.
///
/// # Safety
/// `policy` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn clr_policy_param_count(policy: *const ClrPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.params.theta.len())
}

/// Copies the flat parameter vector into `theta_out`.
///
/// # Safety
/// `policy` must be live; `theta_out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn clr_policy_get_params(policy: *const ClrPolicy, theta_out: *mut f64, len: usize) -> ClrStatus {
    guard(|| {
        nonnull(policy, "policy")?;
        copy_out(&(*policy).params.theta, theta_out, len, "theta_out")
    })
}

/// Replaces the flat parameter vector; `len` must equal the parameter count.
///
/// # Safety
/// `policy` must be live; `theta` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn clr_policy_set_params(policy: *mut ClrPolicy, theta: *const f64, len: usize) -> ClrStatus {
    guard(|| {
        nonnull(policy, "policy")?;
        let p = &mut *policy;
        let theta = in_slice(theta, len, "theta")?;
        p.params = lib(p.params.with_theta(theta.to_vec()))?;
        Ok(())
    })
}

/// Evaluates the policy on one observation.
///
/// # Safety
/// `policy` must be live; buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn clr_policy_forward(
    policy: *const ClrPolicy,
    input: *const f64,
    in_len: usize,
    output: *mut f64,
    out_len: usize,
) -> ClrStatus {
    guard(|| {
        nonnull(policy, "policy")?;
        let y = lib((*policy).params.forward(in_slice(input, in_len, "input")?))?;
        copy_out(&y, output, out_len, "output")
    })
}

/// Total reward of one episode driven by the policy.
///
/// # Safety
/// `policy` and `task` must be live; `total_reward` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clr_policy_rollout(
    policy: *const ClrPolicy,
    task: *const ClrTask,
    scenario_seed: u64,
    total_reward: *mut f64,
) -> ClrStatus {
    guard(|| {
        nonnull(policy, "policy")?;
        nonnull(task, "task")?;
        nonnull(total_reward, "total_reward")?;
        let (p, t) = (&(*policy).params, &(*task).task);
        if p.d_in() != env::state_dim(t) || p.d_out() != env::action_dim(&t.system) {
            return Err(fail(ClrStatus::InvalidInput, "policy dimensions do not match the task"));
        }
        *total_reward = lib(env::rollout_return(p, t, Scenario::Resample(scenario_seed)))?;
        Ok(())
    })
}

/// `-x^2 + 10`.
#[no_mangle]
pub extern "C" fn clr_bench_f1(x: f64) -> f64 {
    clrmeta::es::bench_f1(x)
}

/// The two-dimensional Ackley benchmark in its printed form (minimum 100 at the origin).
#[no_mangle]
pub extern "C" fn clr_bench_f2(x: f64, y: f64) -> f64 {
    clrmeta::es::bench_f2(x, y)
}
