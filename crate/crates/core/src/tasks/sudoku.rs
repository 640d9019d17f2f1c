use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Payload, RewardMode, RewardSpec, Split, TaskError, TaskInstance, TaskKind};

/// Row-major 4x4 grid; 0 marks an empty cell.
pub type Grid = [u8; 16];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SudokuPayload {
    pub puzzle: Vec<u8>,
    pub solution: Vec<u8>,
}

fn peers_allow(grid: &Grid, cell: usize, digit: u8) -> bool {
    let (r, c) = (cell / 4, cell % 4);
    let (br, bc) = (r / 2 * 2, c / 2 * 2);
    (0..4).all(|k| grid[r * 4 + k] != digit && grid[k * 4 + c] != digit)
        && (0..2).all(|dr| (0..2).all(|dc| grid[(br + dr) * 4 + bc + dc] != digit))
}

/// Number of completions of `grid`, stopping once `limit` is reached.
pub fn count_solutions(grid: &Grid, limit: usize) -> usize {
    fn go(g: &mut Grid, limit: usize, found: &mut usize) {
        let Some(cell) = g.iter().position(|&d| d == 0) else {
            *found += 1;
            return;
        };
        for d in 1..=4 {
            if peers_allow(g, cell, d) {
                g[cell] = d;
                go(g, limit, found);
                g[cell] = 0;
                if *found >= limit {
                    return;
                }
            }
        }
    }
    let mut g = *grid;
    let mut found = 0;
    go(&mut g, limit, &mut found);
    found
}

/// Every row, column and 2x2 box holds 1..=4 exactly once.
pub fn is_valid_solution(grid: &Grid) -> bool {
    let full = |cells: [usize; 4]| {
        let mut seen = [false; 5];
        cells.iter().all(|&i| {
            let d = grid[i] as usize;
            (1..=4).contains(&d) && !std::mem::replace(&mut seen[d], true)
        })
    };
    (0..4).all(|k| {
        let (br, bc) = (k / 2 * 2, k % 2 * 2);
        full([k * 4, k * 4 + 1, k * 4 + 2, k * 4 + 3])
            && full([k, 4 + k, 8 + k, 12 + k])
            && full([br * 4 + bc, br * 4 + bc + 1, (br + 1) * 4 + bc, (br + 1) * 4 + bc + 1])
    })
}

fn random_full_grid<R: Rng + ?Sized>(rng: &mut R) -> Grid {
    fn fill<R: Rng + ?Sized>(g: &mut Grid, cell: usize, rng: &mut R) -> bool {
        if cell == 16 {
            return true;
        }
        let mut digits = [1u8, 2, 3, 4];
        digits.shuffle(rng);
        for d in digits {
            if peers_allow(g, cell, d) {
                g[cell] = d;
                if fill(g, cell + 1, rng) {
                    return true;
                }
                g[cell] = 0;
            }
        }
        false
    }
    let mut g = [0u8; 16];
    assert!(fill(&mut g, 0, rng), "4x4 grids always complete");
    g
}

fn render(grid: &Grid) -> String {
    grid.iter()
        .map(|&d| if d == 0 { '.' } else { (b'0' + d) as char })
        .collect()
}

/// A puzzle with exactly `holes` empty cells and a unique solution.
pub fn gen_sudoku4<R: Rng + ?Sized>(rng: &mut R, holes: usize) -> Result<TaskInstance, TaskError> {
    if !(4..=8).contains(&holes) {
        return Err(TaskError::InvalidSetting(format!("holes {holes} not in 4..=8")));
    }
    loop {
        let solution = random_full_grid(rng);
        let mut puzzle = solution;
        let mut cells: Vec<usize> = (0..16).collect();
        cells.shuffle(rng);
        let mut removed = 0;
        for cell in cells {
            if removed == holes {
                break;
            }
            puzzle[cell] = 0;
            if count_solutions(&puzzle, 2) == 1 {
                removed += 1;
            } else {
                puzzle[cell] = solution[cell];
            }
        }
        if removed == holes {
            return Ok(TaskInstance {
                kind: TaskKind::Sudoku4,
                prompt: render(&puzzle),
                payload: Payload::Sudoku4(SudokuPayload {
                    puzzle: puzzle.to_vec(),
                    solution: solution.to_vec(),
                }),
                split: Split::Train,
            });
        }
    }
}

/// The 16 cells of a completion: spaces, commas and semicolons are skipped,
/// `.` or `0` mark an empty cell. `None` when fewer than 16 cells are present
/// or a cell character is not a digit 0-4 or `.`.
fn parse_grid(completion: &str) -> Option<Grid> {
    let mut grid = [0u8; 16];
    let mut cells = completion.chars().filter(|c| !matches!(c, ' ' | ',' | ';'));
    for slot in grid.iter_mut() {
        *slot = match cells.next()? {
            '.' | '0' => 0,
            c @ '1'..='4' => c as u8 - b'0',
            _ => return None,
        };
    }
    Some(grid)
}

/// Binary: 1 iff the grid is complete, valid and keeps every given. Partial:
/// fraction of originally empty cells holding the solution digit.
pub fn reward_sudoku4(p: &SudokuPayload, completion: &str, spec: RewardSpec) -> f64 {
    let Some(grid) = parse_grid(completion) else {
        return 0.0;
    };
    match spec.mode {
        RewardMode::Binary => {
            let keeps_givens = p.puzzle.iter().zip(&grid).all(|(&g, &d)| g == 0 || g == d);
            f64::from(u8::from(keeps_givens && is_valid_solution(&grid)))
        }
        RewardMode::Partial => {
            let holes: Vec<usize> = (0..16).filter(|&i| p.puzzle[i] == 0).collect();
            if holes.is_empty() {
                return 0.0;
            }
            let hits = holes.iter().filter(|&&i| grid[i] == p.solution[i]).count();
            hits as f64 / holes.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPartition {
    pub train: Vec<TaskInstance>,
    pub test: Vec<TaskInstance>,
}

/// Partitions by solution grid: a shuffled `test_fraction` of the distinct
/// solutions goes to the test side together with every puzzle sharing them.
pub fn split_by_solution<R: Rng + ?Sized>(
    instances: &[TaskInstance],
    test_fraction: f64,
    rng: &mut R,
) -> SplitPartition {
    let solution_of = |inst: &TaskInstance| match &inst.payload {
        Payload::Sudoku4(p) => p.solution.clone(),
        _ => Vec::new(),
    };
    let mut distinct: Vec<Vec<u8>> = instances
        .iter()
        .map(solution_of)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    distinct.shuffle(rng);
    let n_test = (distinct.len() as f64 * test_fraction.clamp(0.0, 1.0)).round() as usize;
    let test_set: BTreeSet<Vec<u8>> = distinct.into_iter().take(n_test).collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for inst in instances {
        let mut inst = inst.clone();
        if test_set.contains(&solution_of(&inst)) {
            inst.split = Split::Test;
            test.push(inst);
        } else {
            inst.split = Split::Train;
            train.push(inst);
        }
    }
    SplitPartition { train, test }
}
