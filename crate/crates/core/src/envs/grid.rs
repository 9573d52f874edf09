//! Deterministic-move gridworlds. States are `row * cols + col` with row 0
//! at the top; moves that would leave the grid keep the agent in place.

use crate::envs::{Env, RewardNoise};
use crate::error::{Error, Result};
use crate::mdp::MdpBuilder;
use crate::Scalar;

pub const GRID_UP: usize = 0;
pub const GRID_RIGHT: usize = 1;
pub const GRID_DOWN: usize = 2;
pub const GRID_LEFT: usize = 3;

const FROZENLAKE_4X4: &str = include_str!("../../assets/frozenlake_4x4.txt");
const CLIFFWALK_4X12: &str = include_str!("../../assets/cliffwalk_4x12.txt");

/// Rewards for entering a cell of each kind.
#[derive(Debug, Clone, Copy)]
pub struct GridRules<T> {
    pub step: T,
    pub goal: T,
    pub hole: T,
    /// Entering a cliff cell pays this and teleports to the start.
    pub cliff: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Free,
    Goal,
    Hole,
    Cliff,
}

struct GridMap {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    start: usize,
}

/// Map characters: `S` start, `G` goal, `H` hole, `C` cliff, `F` or `.` free.
fn parse_map(text: &str) -> Result<GridMap> {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let rows = lines.len();
    let cols = lines.first().map_or(0, |l| l.len());
    if rows == 0 || cols == 0 {
        return Err(Error::Parse("empty grid map".into()));
    }
    let mut cells = Vec::with_capacity(rows * cols);
    let mut start = None;
    for line in &lines {
        if line.len() != cols {
            return Err(Error::Parse("ragged grid map".into()));
        }
        for ch in line.chars() {
            cells.push(match ch {
                'S' => {
                    start = Some(cells.len());
                    Cell::Free
                }
                'F' | '.' => Cell::Free,
                'G' => Cell::Goal,
                'H' => Cell::Hole,
                'C' => Cell::Cliff,
                other => return Err(Error::Parse(format!("unknown map character `{other}`"))),
            });
        }
    }
    let start = start.ok_or_else(|| Error::Parse("map has no start".into()))?;
    Ok(GridMap { rows, cols, cells, start })
}

fn neighbour(rows: usize, cols: usize, s: usize, a: usize) -> usize {
    let (r, c) = (s / cols, s % cols);
    let (r, c) = match a {
        GRID_UP => (r.saturating_sub(1), c),
        GRID_RIGHT => (r, (c + 1).min(cols - 1)),
        GRID_DOWN => ((r + 1).min(rows - 1), c),
        _ => (r, c.saturating_sub(1)),
    };
    r * cols + c
}

fn build_grid<T: Scalar>(
    id: &str,
    map: &GridMap,
    rules: GridRules<T>,
    step_noise: RewardNoise<T>,
    gamma: T,
) -> Result<Env<T>> {
    let ns = map.rows * map.cols;
    let mut b = MdpBuilder::new(ns, 4, gamma);
    let mut noise = vec![RewardNoise::None; ns * 4 * ns];
    for s in 0..ns {
        match map.cells[s] {
            Cell::Goal | Cell::Hole => {
                b = b.terminal(s);
                continue;
            }
            Cell::Free | Cell::Cliff => {}
        }
        for a in 0..4 {
            let to = neighbour(map.rows, map.cols, s, a);
            let (s2, r) = match map.cells[to] {
                Cell::Free => (to, rules.step),
                Cell::Goal => (to, rules.goal),
                Cell::Hole => (to, rules.hole),
                Cell::Cliff => (map.start, rules.cliff),
            };
            b.add(s, a, s2, T::one(), r);
            if map.cells[to] == Cell::Free {
                noise[(s * 4 + a) * ns + s2] = step_noise;
            }
        }
    }
    Env::with_noise(id, b.build()?, noise, map.start)
}

/// `size × size` grid, start lower-left, terminal goal upper-right. Each
/// non-goal move pays one of `step_rewards` with equal probability; entering
/// the goal pays `goal_reward`.
pub fn make_stochastic_grid<T: Scalar>(size: usize, step_rewards: (T, T), goal_reward: T, gamma: T) -> Result<Env<T>> {
    if size < 2 {
        return Err(Error::Precondition(format!("grid size {size} < 2")));
    }
    let (lo, hi) = step_rewards;
    let two = T::one() + T::one();
    let mean = (lo + hi) / two;
    let half_width = ((hi - lo) / two).abs();
    let noise = if half_width > T::zero() {
        RewardNoise::TwoPoint { half_width }
    } else {
        RewardNoise::None
    };
    let mut cells = vec![Cell::Free; size * size];
    cells[size - 1] = Cell::Goal;
    let map = GridMap {
        rows: size,
        cols: size,
        cells,
        start: (size - 1) * size,
    };
    let rules = GridRules {
        step: mean,
        goal: goal_reward,
        hole: mean,
        cliff: mean,
    };
    build_grid("grid", &map, rules, noise, gamma)
}

/// Built-in deterministic tasks: `cliffwalk` (4×12) and `frozenlake_det` (4×4).
pub fn make_named_env<T: Scalar>(name: &str, gamma: T) -> Result<Env<T>> {
    let (text, rules) = match name {
        "cliffwalk" => (
            CLIFFWALK_4X12,
            GridRules {
                step: T::of(-1.0),
                goal: T::of(-1.0),
                hole: T::of(-1.0),
                cliff: T::of(-100.0),
            },
        ),
        "frozenlake_det" => (
            FROZENLAKE_4X4,
            GridRules {
                step: T::zero(),
                goal: T::one(),
                hole: T::zero(),
                cliff: T::zero(),
            },
        ),
        other => return Err(Error::UnknownEnv(other.to_string())),
    };
    build_grid(name, &parse_map(text)?, rules, RewardNoise::None, gamma)
}
