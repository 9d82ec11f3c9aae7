//! Prints the cardio trace for a number of ticks (default 30).

use semsim_core::{builtin, Kernel, KernelConfig};

fn main() {
    let ticks = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(30);
    let model = builtin("cardio", None)
        .expect("bundled")
        .expect("cardio builds");
    let mut kernel = Kernel::new(model, KernelConfig::default());
    kernel.run(Some(ticks)).expect("run");
    for e in kernel.trace() {
        println!("{:>4}  {}", e.step, e.line);
    }
    for r in kernel.reports() {
        if !r.validation.passed() {
            println!("{}", r.summary());
        }
    }
}
