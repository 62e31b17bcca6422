//! Grid-world simulators: Pac-Men, sparse Pac-Men, Windy Maze, Firefighters.
//!
//! All kinds share the mechanics: agents move simultaneously on a walled
//! grid (resolved in ascending agent index, co-occupancy allowed), observe a
//! 5x5 window of 4 terrain channels plus their normalized coordinates, and
//! receive a single global reward at the final step of the episode. What the
//! reward aggregates and which interact actions exist is per kind.

pub mod map;

use crate::{Error, Result};
use map::{Cell, GridMap};
use ndarray::Array1;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

pub type Pos = (i32, i32);

/// Observation channels per window cell.
pub const CHANNELS: usize = 4;
/// 5x5 window, 4 channels, plus 2 normalized coordinates.
pub const OBS_DIM: usize = 25 * CHANNELS + 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    PacMen,
    SparsePacMen,
    WindyMaze,
    Firefighters,
}

impl EnvKind {
    pub fn n_agents(self) -> usize {
        match self {
            EnvKind::WindyMaze => 2,
            _ => 4,
        }
    }

    /// 4 moves + eat; Firefighters adds pump.
    pub fn n_actions(self) -> usize {
        match self {
            EnvKind::Firefighters => 6,
            _ => 5,
        }
    }

    pub fn default_horizon(self) -> u32 {
        match self {
            EnvKind::PacMen | EnvKind::SparsePacMen => 30,
            EnvKind::WindyMaze => 15,
            EnvKind::Firefighters => 20,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::PacMen => "pacmen",
            EnvKind::SparsePacMen => "sparse-pacmen",
            EnvKind::WindyMaze => "windy",
            EnvKind::Firefighters => "firefighters",
        }
    }

    pub fn parse(s: &str) -> Result<EnvKind> {
        match s {
            "pacmen" => Ok(EnvKind::PacMen),
            "sparse-pacmen" => Ok(EnvKind::SparsePacMen),
            "windy" => Ok(EnvKind::WindyMaze),
            "firefighters" => Ok(EnvKind::Firefighters),
            other => Err(Error::Config(format!(
                "unknown env kind {other:?} (expected pacmen, sparse-pacmen, windy, firefighters)"
            ))),
        }
    }

    fn map_text(self) -> &'static str {
        match self {
            EnvKind::PacMen | EnvKind::SparsePacMen => PACMEN_MAP,
            EnvKind::WindyMaze => WINDY_MAP,
            EnvKind::Firefighters => FIREFIGHTERS_MAP,
        }
    }
}

/// Four-room maze with a central spawn chamber. The south room is both the
/// largest and the closest to the spawn, so reward-greedy teams collapse into
/// it; the other rooms pay off only under a division of labor.
const PACMEN_MAP: &str = "\
###############
#####.....#####
#####.....#####
#####.....#####
#######.#######
#...###.###...#
#...##...##...#
#......S......#
#...##...##...#
#...###.###...#
#####.....#####
#####.....#####
#####.....#####
#####.....#####
###############";

/// Room bounds of the Pac-Men map as inclusive (x0, y0, x1, y1), indexed
/// north, south, west, east.
pub const PACMEN_ROOMS: [(i32, i32, i32, i32); 4] = [
    (5, 1, 9, 3),
    (5, 10, 9, 13),
    (1, 5, 3, 9),
    (11, 5, 13, 9),
];

const DOTS_PER_ROOM: usize = 3;

/// T-shaped maze: a vertical corridor up from the spawn, a horizontal bar on
/// top with one dot at each end.
const WINDY_MAP: &str = "\
###########
#.........#
#####.#####
#####.#####
#####.#####
#####.#####
#####S#####
###########";

const WINDY_DOTS: [Pos; 2] = [(1, 1), (9, 1)];

/// Wind blows in the bar cells strictly right of the junction: a move
/// resolved there is replaced by a right-move with probability 0.4. Keeping
/// the left half calm leaves the far dot reachable inside the horizon while
/// the wind still herds wanderers toward the right dot.
const WIND_X: (i32, i32) = (6, 9);
const WIND_Y: i32 = 1;
const WIND_PROB: f64 = 0.4;

/// Burning area next to the spawn, a second one in the far corner, and two
/// river segments in between. The starting tank covers only the near fires.
const FIREFIGHTERS_MAP: &str = "\
############
#FFF.......#
#FFF.......#
#.S........#
#..........#
#...~~~....#
#....~~~...#
#..........#
#..........#
#.......FFF#
#.......FFF#
############";

const INITIAL_TANK: u32 = 4;

/// Mutable episode state. All fields are inspectable for tests and tooling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    pub positions: Vec<Pos>,
    /// Dot cells (Pac-Men kinds, Windy) or burning cells (Firefighters).
    pub items: BTreeSet<Pos>,
    pub water_tank: u32,
    pub step_count: u32,
    pub total_eaten: u32,
    /// Per-room dot counters; meaningful for the Pac-Men kinds only.
    pub per_room_eaten: [u32; 4],
    pub extinguished: u32,
}

pub struct StepOutcome {
    pub obs: Vec<Array1<f64>>,
    pub reward: f64,
    pub done: bool,
}

pub struct Env {
    kind: EnvKind,
    map: GridMap,
    horizon: u32,
    include_position: bool,
    state: EnvState,
    rng: ChaCha8Rng,
}

/// up, down, left, right displacement for action indices 0..4.
const MOVES: [(i32, i32); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

impl Env {
    pub fn new(kind: EnvKind, horizon: u32, include_position: bool) -> Env {
        let map = GridMap::parse(kind.map_text()).expect("built-in map is valid");
        Env {
            kind,
            map,
            horizon,
            include_position,
            state: EnvState {
                positions: Vec::new(),
                items: BTreeSet::new(),
                water_tank: 0,
                step_count: 0,
                total_eaten: 0,
                per_room_eaten: [0; 4],
                extinguished: 0,
            },
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn with_defaults(kind: EnvKind) -> Env {
        Env::new(kind, kind.default_horizon(), true)
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn n_agents(&self) -> usize {
        self.kind.n_agents()
    }

    pub fn n_actions(&self) -> usize {
        self.kind.n_actions()
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// Direct state access for probing tools and tests.
    pub fn state_mut(&mut self) -> &mut EnvState {
        &mut self.state
    }

    /// Start a new episode. Identical seeds produce identical states.
    pub fn reset(&mut self, seed: u64) -> Vec<Array1<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let spawns = &self.map.spawns;
        let n = self.kind.n_agents();
        self.state.positions = (0..n).map(|i| spawns[i % spawns.len()]).collect();
        self.state.step_count = 0;
        self.state.total_eaten = 0;
        self.state.per_room_eaten = [0; 4];
        self.state.extinguished = 0;
        self.state.water_tank = 0;
        self.state.items.clear();
        match self.kind {
            EnvKind::PacMen | EnvKind::SparsePacMen => {
                for room in 0..4 {
                    let cells = self.room_floor_cells(room);
                    let picks = sample_without_replacement(&cells, DOTS_PER_ROOM, &mut self.rng);
                    self.state.items.extend(picks);
                }
            }
            EnvKind::WindyMaze => {
                self.state.items.extend(WINDY_DOTS);
            }
            EnvKind::Firefighters => {
                self.state.items.extend(self.map.cells_of(Cell::Fire));
                self.state.water_tank = INITIAL_TANK;
            }
        }
        (0..n).map(|i| self.observe(i)).collect()
    }

    /// Room index (N/S/W/E) for the Pac-Men map, None outside every room.
    pub fn room_of(pos: Pos) -> Option<usize> {
        PACMEN_ROOMS
            .iter()
            .position(|&(x0, y0, x1, y1)| pos.0 >= x0 && pos.0 <= x1 && pos.1 >= y0 && pos.1 <= y1)
    }

    fn room_floor_cells(&self, room: usize) -> Vec<Pos> {
        let (x0, y0, x1, y1) = PACMEN_ROOMS[room];
        let mut out = Vec::new();
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.map.cell((x, y)) == Cell::Floor {
                    out.push((x, y));
                }
            }
        }
        out
    }

    fn in_wind_region(&self, pos: Pos) -> bool {
        self.kind == EnvKind::WindyMaze
            && pos.1 == WIND_Y
            && pos.0 >= WIND_X.0
            && pos.0 <= WIND_X.1
    }

    /// Advance one step. Agents resolve in ascending index: moves into walls
    /// are no-ops, a dot is consumed once, spraying needs water, pumping
    /// needs a river on or next to the agent. Reward is zero until the final
    /// step, where it is the kind's episode aggregate.
    pub fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        let n = self.kind.n_agents();
        if actions.len() != n {
            return Err(Error::Shape(format!(
                "step: {} actions for {} agents",
                actions.len(),
                n
            )));
        }
        if self.state.step_count >= self.horizon {
            return Err(Error::Shape("step called on a finished episode".into()));
        }
        for (i, &a) in actions.iter().enumerate() {
            if a >= self.kind.n_actions() {
                return Err(Error::Shape(format!(
                    "action {a} out of range for {} (agent {i})",
                    self.kind.name()
                )));
            }
            self.apply_action(i, a);
        }
        self.state.step_count += 1;
        let done = self.state.step_count >= self.horizon;
        let reward = if done { self.episode_reward() } else { 0.0 };
        let obs = (0..n).map(|i| self.observe(i)).collect();
        Ok(StepOutcome { obs, reward, done })
    }

    fn apply_action(&mut self, agent: usize, action: usize) {
        let pos = self.state.positions[agent];
        // Wind may hijack whatever the agent chose, including interactions.
        let action = if self.in_wind_region(pos) && self.rng.random::<f64>() < WIND_PROB {
            3
        } else {
            action
        };
        match action {
            0..=3 => {
                let (dx, dy) = MOVES[action];
                let target = (pos.0 + dx, pos.1 + dy);
                if !self.map.is_wall(target) {
                    self.state.positions[agent] = target;
                }
            }
            4 => match self.kind {
                EnvKind::Firefighters => {
                    // Spray: extinguish a burning cell under the agent.
                    if self.state.water_tank > 0 && self.state.items.remove(&pos) {
                        self.state.water_tank -= 1;
                        self.state.extinguished += 1;
                    }
                }
                _ => {
                    // Eat: consume a dot under the agent.
                    if self.state.items.remove(&pos) {
                        self.state.total_eaten += 1;
                        if matches!(self.kind, EnvKind::PacMen | EnvKind::SparsePacMen) {
                            if let Some(room) = Env::room_of(pos) {
                                self.state.per_room_eaten[room] += 1;
                            }
                        }
                    }
                }
            },
            5 => {
                // Pump: on or next to a river cell, add one unit of water.
                let near_river = std::iter::once((0, 0))
                    .chain(MOVES)
                    .any(|(dx, dy)| self.map.cell((pos.0 + dx, pos.1 + dy)) == Cell::River);
                if near_river {
                    self.state.water_tank += 1;
                }
            }
            _ => unreachable!("validated above"),
        }
    }

    fn episode_reward(&self) -> f64 {
        match self.kind {
            EnvKind::PacMen | EnvKind::WindyMaze => self.state.total_eaten as f64,
            EnvKind::SparsePacMen => *self.state.per_room_eaten.iter().min().unwrap() as f64,
            EnvKind::Firefighters => self.state.extinguished as f64,
        }
    }

    /// 5x5 window of (wall, dot-or-fire, river, other-agent) channels per
    /// cell, flattened cell-major, then the agent's normalized coordinates.
    /// Cells beyond the map edge read as walls. Nothing in the vector
    /// identifies which agent is looking.
    pub fn observe(&self, agent: usize) -> Array1<f64> {
        let (ax, ay) = self.state.positions[agent];
        let mut obs = Array1::zeros(OBS_DIM);
        let mut k = 0;
        for dy in -2..=2 {
            for dx in -2..=2 {
                let p = (ax + dx, ay + dy);
                if self.map.is_wall(p) {
                    obs[k] = 1.0;
                }
                if self.state.items.contains(&p) {
                    obs[k + 1] = 1.0;
                }
                if self.map.cell(p) == Cell::River {
                    obs[k + 2] = 1.0;
                }
                if self
                    .state
                    .positions
                    .iter()
                    .enumerate()
                    .any(|(j, &q)| j != agent && q == p)
                {
                    obs[k + 3] = 1.0;
                }
                k += CHANNELS;
            }
        }
        if self.include_position {
            obs[k] = ax as f64 / self.map.width as f64;
            obs[k + 1] = ay as f64 / self.map.height as f64;
        }
        obs
    }

    /// ASCII picture of the current state: terrain plus agent indices
    /// (`*` where several agents stack) and `o` for dots.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for y in 0..self.map.height as i32 {
            for x in 0..self.map.width as i32 {
                let here: Vec<usize> = self
                    .state
                    .positions
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p == (x, y))
                    .map(|(i, _)| i)
                    .collect();
                let ch = if here.len() > 1 {
                    '*'
                } else if here.len() == 1 {
                    char::from_digit(here[0] as u32, 10).unwrap_or('?')
                } else if self.state.items.contains(&(x, y)) {
                    if self.kind == EnvKind::Firefighters {
                        'F'
                    } else {
                        'o'
                    }
                } else {
                    match self.map.cell((x, y)) {
                        Cell::Wall => '#',
                        Cell::River => '~',
                        Cell::Spawn => 'S',
                        _ => '.',
                    }
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

fn sample_without_replacement(cells: &[Pos], k: usize, rng: &mut impl Rng) -> Vec<Pos> {
    assert!(cells.len() >= k, "room has too few floor cells");
    let mut pool: Vec<Pos> = cells.to_vec();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let i = rng.random_range(0..pool.len());
        out.push(pool.swap_remove(i));
    }
    out
}

/// Accumulate per-agent visit counts over logged positions. Grids are
/// width x height, indexed [x][y].
pub fn occupancy_heatmap(
    n_agents: usize,
    width: usize,
    height: usize,
    logs: &[Vec<Pos>],
) -> Vec<ndarray::Array2<u32>> {
    let mut grids = vec![ndarray::Array2::zeros((width, height)); n_agents];
    for step in logs {
        for (i, &(x, y)) in step.iter().enumerate() {
            grids[i][[x as usize, y as usize]] += 1;
        }
    }
    grids
}

/// Uniform-random joint actions, the exploration floor and a test oracle.
pub fn random_actions(env: &Env, rng: &mut impl Rng) -> Vec<usize> {
    (0..env.n_agents())
        .map(|_| rng.random_range(0..env.n_actions()))
        .collect()
}

/// Hand-scripted Windy Maze policy used as a reward oracle: agent 0 takes the
/// left dot, agent 1 the right one. Returns greedy actions for the current
/// positions.
pub fn windy_scripted_actions(env: &Env) -> Vec<usize> {
    let mut actions = Vec::with_capacity(2);
    for (i, &(x, y)) in env.state().positions.iter().enumerate() {
        let target = WINDY_DOTS[i.min(1)];
        let a = if (x, y) == target {
            4
        } else if y > WIND_Y {
            0
        } else if x > target.0 {
            2
        } else {
            3
        };
        actions.push(a);
    }
    actions
}
