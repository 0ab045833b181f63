//! A tiny runner for named release checks.
//!
//! Each check returns a one-line detail on success or a reason on failure;
//! a panic inside a check is reported as a failure rather than aborting the
//! run, and a check that overruns its time budget fails even if its
//! assertions held.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

pub type CheckResult = Result<String, String>;

pub struct Check {
    pub name: &'static str,
    pub title: &'static str,
    pub budget: Option<Duration>,
    pub run: fn() -> CheckResult,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Verdict {
    pub fn line(&self) -> String {
        format!(
            "{} {} [{:.1}s] {}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panicked".to_string()
    }
}

pub fn run_check(check: &Check) -> Verdict {
    let start = Instant::now();
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let result = panic::catch_unwind(AssertUnwindSafe(check.run));
    panic::set_hook(hook);
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match result {
        Ok(Ok(detail)) => (true, detail),
        Ok(Err(reason)) => (false, reason),
        Err(payload) => (false, format!("panic: {}", panic_message(payload.as_ref()))),
    };
    if let Some(budget) = check.budget {
        if elapsed > budget {
            passed = false;
            detail = format!("exceeded {}s budget; {detail}", budget.as_secs());
        }
    }
    Verdict {
        name: check.name,
        passed,
        detail: format!("{}: {detail}", check.title),
        elapsed,
    }
}

/// Command-line filters select checks by exact name (`P4`); no filters
/// selects everything. Flags passed through by cargo are ignored.
pub fn selected(name: &str, args: &[String]) -> bool {
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    filters.is_empty() || filters.iter().any(|f| f.eq_ignore_ascii_case(name))
}

/// Turns a failed condition into a check failure.
pub fn ensure(cond: bool, reason: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(reason())
    }
}
