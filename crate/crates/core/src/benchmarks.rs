//! Programs shipped with the compiler, for tests, the CLI and the demo.

pub struct Benchmark {
    pub name: &'static str,
    pub source: &'static str,
}

macro_rules! bench {
    ($name:literal) => {
        Benchmark {
            name: $name,
            source: include_str!(concat!("../benchmarks/", $name, ".pcat")),
        }
    };
}

pub const BENCHMARKS: &[Benchmark] = &[
    bench!("blue_increase"),
    bench!("blue_decrease"),
    bench!("blue_decrease_mutant"),
    bench!("sampling"),
    bench!("snap_heavy_hitter"),
    bench!("conga"),
    bench!("me2"),
    bench!("motivating_v1"),
    bench!("motivating_v2"),
];

pub fn benchmark(name: &str) -> Option<&'static Benchmark> {
    BENCHMARKS.iter().find(|b| b.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_parse() {
        for b in BENCHMARKS {
            crate::ir::parse(b.source).unwrap_or_else(|e| panic!("{}: {e}", b.name));
        }
    }
}
