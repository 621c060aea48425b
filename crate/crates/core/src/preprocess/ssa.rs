use std::collections::BTreeMap;

use super::Assign;

/// Gives every assignment a fresh `name#k` target and renames reads to the
/// latest version. Names already carrying `#` or `@` are left untouched, so
/// the pass is idempotent. Returns the code and the final version of each
/// renamed variable.
pub fn to_ssa(code: &[Assign]) -> (Vec<Assign>, BTreeMap<String, String>) {
    let mut count: BTreeMap<String, usize> = BTreeMap::new();
    let mut current: BTreeMap<String, String> = BTreeMap::new();
    let mut out = Vec::with_capacity(code.len());
    for a in code {
        let mut value = a.value.clone();
        value.rename(&mut |v| current.get(v).cloned());
        let target = if a.target.contains('#') || a.target.contains('@') {
            a.target.clone()
        } else {
            let k = count.entry(a.target.clone()).or_insert(0);
            *k += 1;
            let name = format!("{}#{}", a.target, k);
            current.insert(a.target.clone(), name.clone());
            name
        };
        out.push(Assign { target, value });
    }
    (out, current)
}
