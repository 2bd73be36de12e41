#![no_main]

use libfuzzer_sys::fuzz_target;
use mono_split::experiments::{Generator, Instance};

// Larger problems are valid but make each execution too slow to be useful.
const BUILD_DIM: usize = 16;

fn small(g: &Generator) -> bool {
    match g {
        Generator::Cournot(p) => p.players <= BUILD_DIM,
        Generator::Mlf(p) => p.leaders <= BUILD_DIM,
        Generator::Synthetic(p) => p.dim <= BUILD_DIM,
    }
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(inst) = Instance::from_json(text) else { return };
    let again = Instance::from_json(&inst.to_json()).expect("round trip");
    assert_eq!(again.problem, inst.problem);
    if small(&inst.problem) {
        if let Ok(spec) = inst.build() {
            let x = vec![0.0; spec.dim()];
            let _ = spec.eval_mean(&x);
        }
    }
});
