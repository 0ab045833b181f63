//! Release acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any selected criterion fails.
//!
//! `cargo test -p acceptance --test acceptance -- P4 P9` runs a subset.

mod ranking;
mod reports;
mod server;

use std::time::Duration;

use acceptance::{run_check, selected, Check};

const CHECKS: &[Check] = &[
    Check {
        name: "P1",
        title: "gradient/Hessian vs finite differences",
        budget: Some(Duration::from_secs(30)),
        run: ranking::p1_gradients,
    },
    Check {
        name: "P2",
        title: "EM monotonicity",
        budget: None,
        run: ranking::p2_monotone,
    },
    Check {
        name: "P3",
        title: "BT reduction",
        budget: None,
        run: ranking::p3_bt_reduction,
    },
    Check {
        name: "P4",
        title: "ranking recovery",
        budget: Some(Duration::from_secs(120)),
        run: ranking::p4_recovery,
    },
    Check {
        name: "P5",
        title: "convergence by M=100",
        budget: None,
        run: ranking::p5_convergence,
    },
    Check {
        name: "P6",
        title: "method ordering and drift",
        budget: None,
        run: ranking::p6_ordering,
    },
    Check {
        name: "P7",
        title: "baseline oracles",
        budget: None,
        run: ranking::p7_oracles,
    },
    Check {
        name: "P8",
        title: "server properties",
        budget: None,
        run: server::p8_properties,
    },
    Check {
        name: "P9",
        title: "end-to-end loop",
        budget: Some(Duration::from_secs(120)),
        run: server::p9_end_to_end,
    },
    Check {
        name: "P10",
        title: "report pipeline",
        budget: None,
        run: reports::p10_reports,
    },
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut failed = 0;
    let mut ran = 0;
    for check in CHECKS.iter().filter(|c| selected(c.name, &args)) {
        let verdict = run_check(check);
        println!("{}", verdict.line());
        ran += 1;
        if !verdict.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
