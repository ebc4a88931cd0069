//! Exhaustive interleaving exploration for small simulated-thread
//! protocols. Intended for a handful of threads and steps; the state is
//! cloned at every branch.

/// One scheduled step: which thread moved and which of its ops ran.
pub type Step = (usize, usize);

/// Run `on_step` after every step of every interleaving of the
/// per-thread op sequences, starting each interleaving from a clone of
/// `init`. `apply` executes one op against the state.
pub fn explore<S, O, A, F>(init: &S, threads: &[Vec<O>], apply: &mut A, on_step: &mut F)
where
    S: Clone,
    A: FnMut(&mut S, usize, &O),
    F: FnMut(&S, &[Step]),
{
    let mut positions = vec![0usize; threads.len()];
    let mut history = Vec::new();
    let mut state = init.clone();
    walk(&mut state, threads, &mut positions, &mut history, apply, on_step);
}

fn walk<S, O, A, F>(
    state: &mut S,
    threads: &[Vec<O>],
    positions: &mut Vec<usize>,
    history: &mut Vec<Step>,
    apply: &mut A,
    on_step: &mut F,
) where
    S: Clone,
    A: FnMut(&mut S, usize, &O),
    F: FnMut(&S, &[Step]),
{
    for tid in 0..threads.len() {
        if positions[tid] >= threads[tid].len() {
            continue;
        }
        let op_idx = positions[tid];
        let mut branch = state.clone();
        apply(&mut branch, tid, &threads[tid][op_idx]);
        positions[tid] += 1;
        history.push((tid, op_idx));
        on_step(&branch, history);
        walk(&mut branch, threads, positions, history, apply, on_step);
        history.pop();
        positions[tid] -= 1;
    }
}

/// Number of interleavings explored for the given per-thread op counts.
pub fn interleaving_count(lens: &[usize]) -> u64 {
    fn multinomial(lens: &[usize]) -> u64 {
        let total: usize = lens.iter().sum();
        let mut result = 1u64;
        let mut k = 0usize;
        for &len in lens {
            for i in 1..=len {
                k += 1;
                result = result * k as u64 / i as u64;
            }
        }
        debug_assert_eq!(k, total);
        result
    }
    multinomial(lens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_enumeration() {
        let threads = vec![vec![1, 2], vec![3], vec![4]];
        let mut finals = 0u64;
        let total: usize = threads.iter().map(Vec::len).sum();
        explore(
            &0u64,
            &threads,
            &mut |s, _, op| *s += *op,
            &mut |s, hist| {
                if hist.len() == total {
                    finals += 1;
                    assert_eq!(*s, 10);
                }
            },
        );
        assert_eq!(finals, interleaving_count(&[2, 1, 1]));
        assert_eq!(finals, 12);
    }

    #[test]
    fn per_thread_order_is_preserved() {
        let threads = vec![vec!['a', 'b'], vec!['c']];
        explore(
            &Vec::<char>::new(),
            &threads,
            &mut |s, _, op| s.push(*op),
            &mut |s, _| {
                let a = s.iter().position(|&c| c == 'a');
                let b = s.iter().position(|&c| c == 'b');
                if let (Some(a), Some(b)) = (a, b) {
                    assert!(a < b);
                }
            },
        );
    }
}
