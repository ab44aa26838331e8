use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::map::{Cell, GridMap, Pos};
use super::{Action, BeamShape, EnvConfig, EnvError, GameKind};
use crate::rng::{stream, StreamRng};

/// Observation channels: wall, apple, waste, other agent, self.
pub const OBS_CHANNELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    North,
    East,
    South,
    West,
}

impl Orientation {
    const ALL: [Orientation; 4] = [Orientation::North, Orientation::East, Orientation::South, Orientation::West];

    /// Unit step in the facing direction (y grows downwards).
    pub fn forward(self) -> (i32, i32) {
        match self {
            Orientation::North => (0, -1),
            Orientation::East => (1, 0),
            Orientation::South => (0, 1),
            Orientation::West => (-1, 0),
        }
    }

    /// Unit step to the agent's right.
    pub fn right(self) -> (i32, i32) {
        self.rotate_right().forward()
    }

    pub fn rotate_right(self) -> Self {
        Self::ALL[(self as usize + 1) % 4]
    }

    pub fn rotate_left(self) -> Self {
        Self::ALL[(self as usize + 3) % 4]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentBody {
    pub id: usize,
    pub pos: Pos,
    pub orientation: Orientation,
    /// First timestep at which the agent may act again after being hit.
    pub frozen_until: Option<u32>,
}

impl AgentBody {
    pub fn is_frozen(&self, t: u32) -> bool {
        self.frozen_until.is_some_and(|until| t < until)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentEvents {
    pub apple_collected: bool,
    pub fired: bool,
    pub was_hit: bool,
    pub cleaned: bool,
    pub cells_cleaned: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Extrinsic reward per agent.
    pub rewards: Vec<f64>,
    pub events: Vec<AgentEvents>,
    /// Spawn points that came back to life in the regrowth phase.
    pub revived: u32,
    pub waste_spawned: bool,
    pub done: bool,
}

/// Egocentric window, rotated so the agent faces "up", flattened as
/// `(row · side + col) · OBS_CHANNELS + channel`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub side: usize,
    pub data: Vec<f32>,
}

impl Observation {
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.side + col) * OBS_CHANNELS + channel]
    }

    /// Indices of non-zero entries (observations are binary).
    pub fn active(&self) -> Vec<u32> {
        self.data.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i as u32).collect()
    }
}

/// One running Harvest or Cleanup episode.
#[derive(Debug, Clone)]
pub struct Env {
    map: Arc<GridMap>,
    config: Arc<EnvConfig>,
    agents: Vec<AgentBody>,
    occupant: Vec<Option<u16>>,
    apple_alive: Vec<bool>,
    live_apples: usize,
    waste: Vec<bool>,
    waste_count: usize,
    regrow_neighbors: Vec<Vec<u32>>,
    t: u32,
    rng: StreamRng,
}

impl Env {
    /// Starts a new episode with `n_agents` placed on the first start cells.
    pub fn reset(
        map: impl Into<Arc<GridMap>>,
        config: impl Into<Arc<EnvConfig>>,
        n_agents: usize,
        seed: u64,
    ) -> Result<Self, EnvError> {
        let map = map.into();
        let config = config.into();
        config.validate()?;
        match config.game {
            GameKind::Cleanup if map.aquifer().is_empty() => {
                return Err(EnvError::Map("cleanup maps need at least one aquifer cell".into()))
            }
            GameKind::Harvest if !map.aquifer().is_empty() => {
                return Err(EnvError::Map("harvest maps cannot contain aquifer cells".into()))
            }
            _ => {}
        }
        if n_agents == 0 || n_agents > map.starts().len() {
            return Err(EnvError::TooManyAgents { agents: n_agents, starts: map.starts().len() });
        }
        let mut rng = stream(seed, "env", 0);
        let mut occupant = vec![None; map.width() * map.height()];
        let agents: Vec<AgentBody> = map.starts()[..n_agents]
            .iter()
            .enumerate()
            .map(|(id, &pos)| {
                occupant[map.index(pos)] = Some(id as u16);
                AgentBody { id, pos, orientation: Orientation::ALL[rng.random_range(0..4)], frozen_until: None }
            })
            .collect();

        let apple_alive = pick_exact(map.spawn_points().len(), config.initial_apple_fraction, &mut rng);
        let live_apples = apple_alive.iter().filter(|&&a| a).count();
        let (waste, waste_count) = if config.game == GameKind::Cleanup {
            let w = pick_exact(map.aquifer().len(), config.waste.initial_fraction, &mut rng);
            let c = w.iter().filter(|&&x| x).count();
            (w, c)
        } else {
            (Vec::new(), 0)
        };
        let regrow_neighbors = neighbor_lists(map.spawn_points(), config.regrowth.radius);
        Ok(Env { map, config, agents, occupant, apple_alive, live_apples, waste, waste_count, regrow_neighbors, t: 0, rng })
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn agents(&self) -> &[AgentBody] {
        &self.agents
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn done(&self) -> bool {
        self.t >= self.config.episode_len
    }

    pub fn apple_alive(&self) -> &[bool] {
        &self.apple_alive
    }

    pub fn live_apples(&self) -> usize {
        self.live_apples
    }

    pub fn waste(&self) -> &[bool] {
        &self.waste
    }

    /// Polluted fraction of the aquifer (0 for Harvest).
    pub fn waste_density(&self) -> f64 {
        if self.waste.is_empty() {
            0.0
        } else {
            self.waste_count as f64 / self.waste.len() as f64
        }
    }

    /// Moves an agent for scenario setup. The target must be free, non-wall terrain.
    pub fn place_agent(&mut self, id: usize, pos: Pos, orientation: Orientation) -> Result<(), EnvError> {
        if id >= self.agents.len() {
            return Err(EnvError::UnknownAgent(id));
        }
        if self.map.cell(pos) == Cell::Wall {
            return Err(EnvError::Map(format!("({}, {}) is a wall", pos.x, pos.y)));
        }
        let idx = self.map.index(pos);
        if matches!(self.occupant[idx], Some(j) if j as usize != id) {
            return Err(EnvError::Map(format!("({}, {}) is occupied", pos.x, pos.y)));
        }
        let old = self.map.index(self.agents[id].pos);
        self.occupant[old] = None;
        self.occupant[idx] = Some(id as u16);
        self.agents[id].pos = pos;
        self.agents[id].orientation = orientation;
        if let Some(s) = self.map.spawn_at(pos) {
            if self.apple_alive[s] {
                self.apple_alive[s] = false;
                self.live_apples -= 1;
            }
        }
        Ok(())
    }

    /// Sets a spawn point's apple for scenario setup.
    pub fn set_apple(&mut self, spawn: usize, alive: bool) {
        if self.apple_alive[spawn] != alive {
            self.apple_alive[spawn] = alive;
            if alive {
                self.live_apples += 1;
            } else {
                self.live_apples -= 1;
            }
        }
    }

    /// Sets an aquifer cell's waste for scenario setup.
    pub fn set_waste(&mut self, cell: usize, polluted: bool) {
        if self.waste[cell] != polluted {
            self.waste[cell] = polluted;
            if polluted {
                self.waste_count += 1;
            } else {
                self.waste_count -= 1;
            }
        }
    }

    /// Advances one timestep under the joint action `actions` (action ids).
    pub fn step(&mut self, actions: &[usize]) -> Result<StepOutcome, EnvError> {
        if self.done() {
            return Err(EnvError::EpisodeOver(self.t));
        }
        let n = self.agents.len();
        if actions.len() != n {
            return Err(EnvError::ActionCount { expected: n, got: actions.len() });
        }
        let game = self.config.game;
        let mut effective = Vec::with_capacity(n);
        for (i, &id) in actions.iter().enumerate() {
            let a = Action::from_id(id, game)?;
            effective.push(if self.agents[i].is_frozen(self.t) { Action::Noop } else { a });
        }
        let mut rewards = vec![0.0; n];
        let mut events = vec![AgentEvents::default(); n];

        for (agent, a) in self.agents.iter_mut().zip(&effective) {
            match a {
                Action::RotateLeft => agent.orientation = agent.orientation.rotate_left(),
                Action::RotateRight => agent.orientation = agent.orientation.rotate_right(),
                _ => {}
            }
        }
        self.resolve_movement(&effective);

        for (i, agent) in self.agents.iter().enumerate() {
            if let Some(s) = self.map.spawn_at(agent.pos) {
                if self.apple_alive[s] {
                    self.apple_alive[s] = false;
                    self.live_apples -= 1;
                    events[i].apple_collected = true;
                    rewards[i] += self.config.apple_reward;
                }
            }
        }

        let mut hit = vec![false; n];
        for i in 0..n {
            match effective[i] {
                Action::Fire => {
                    events[i].fired = true;
                    rewards[i] -= self.config.fire_cost;
                    for p in self.beam_cells(i, self.config.fire_beam) {
                        if let Some(j) = self.occupant[self.map.index(p)] {
                            let j = j as usize;
                            if j != i && !self.agents[j].is_frozen(self.t) {
                                hit[j] = true;
                            }
                        }
                    }
                }
                Action::Clean => {
                    events[i].cleaned = true;
                    for p in self.beam_cells(i, self.config.clean_beam) {
                        if let Some(w) = self.map.aquifer_at(p) {
                            if self.waste[w] {
                                self.waste[w] = false;
                                self.waste_count -= 1;
                                events[i].cells_cleaned += 1;
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        for j in 0..n {
            if hit[j] {
                events[j].was_hit = true;
                rewards[j] -= self.config.hit_penalty;
                if self.config.hit_freeze > 0 {
                    self.agents[j].frozen_until = Some(self.t + 1 + self.config.hit_freeze);
                }
            }
        }

        let (revived, waste_spawned) = match game {
            GameKind::Harvest => (self.regrow_harvest(), false),
            GameKind::Cleanup => self.regrow_cleanup(),
        };
        self.t += 1;
        Ok(StepOutcome { rewards, events, revived, waste_spawned, done: self.done() })
    }

    /// Simultaneous moves: conflicts over one target cell go to a uniformly
    /// drawn winner; moves into a cell whose occupant stays (or swaps) fail.
    fn resolve_movement(&mut self, effective: &[Action]) {
        let n = self.agents.len();
        let mut desired: Vec<Pos> = self.agents.iter().map(|a| a.pos).collect();
        for (i, agent) in self.agents.iter().enumerate() {
            let (fx, fy) = agent.orientation.forward();
            let (rx, ry) = agent.orientation.right();
            let delta = match effective[i] {
                Action::Forward => (fx, fy),
                Action::Backward => (-fx, -fy),
                Action::StepLeft => (-rx, -ry),
                Action::StepRight => (rx, ry),
                _ => continue,
            };
            let target = Pos::new(agent.pos.x + delta.0, agent.pos.y + delta.1);
            if self.map.cell(target) != Cell::Wall {
                desired[i] = target;
            }
        }

        let mut movers: Vec<usize> = (0..n).filter(|&i| desired[i] != self.agents[i].pos).collect();
        movers.sort_by_key(|&i| (self.map.index(desired[i]), i));
        let mut k = 0;
        while k < movers.len() {
            let target = desired[movers[k]];
            let mut end = k + 1;
            while end < movers.len() && desired[movers[end]] == target {
                end += 1;
            }
            if end - k > 1 {
                let winner = movers[k + self.rng.random_range(0..end - k)];
                for &loser in &movers[k..end] {
                    if loser != winner {
                        desired[loser] = self.agents[loser].pos;
                    }
                }
            }
            k = end;
        }

        loop {
            let mut changed = false;
            for i in 0..n {
                let here = self.agents[i].pos;
                if desired[i] == here {
                    continue;
                }
                if let Some(j) = self.occupant[self.map.index(desired[i])] {
                    let j = j as usize;
                    let there = self.agents[j].pos;
                    if desired[j] == there {
                        desired[i] = here;
                        changed = true;
                    } else if desired[j] == here {
                        desired[i] = here;
                        desired[j] = there;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        for agent in &self.agents {
            let idx = self.map.index(agent.pos);
            self.occupant[idx] = None;
        }
        for (i, agent) in self.agents.iter_mut().enumerate() {
            agent.pos = desired[i];
            let idx = self.map.index(agent.pos);
            debug_assert!(self.occupant[idx].is_none());
            self.occupant[idx] = Some(i as u16);
        }
    }

    /// Cells swept by a beam: `width` parallel lanes of up to `length` cells
    /// ahead of the agent, each lane stopping at the first wall.
    fn beam_cells(&self, agent: usize, shape: BeamShape) -> Vec<Pos> {
        let a = &self.agents[agent];
        let (fx, fy) = a.orientation.forward();
        let (rx, ry) = a.orientation.right();
        let half = (shape.width / 2) as i32;
        let mut cells = Vec::new();
        for lane in -half..=half {
            for k in 1..=shape.length as i32 {
                let p = Pos::new(a.pos.x + k * fx + lane * rx, a.pos.y + k * fy + lane * ry);
                if self.map.cell(p) == Cell::Wall {
                    break;
                }
                cells.push(p);
            }
        }
        cells
    }

    fn spawn_free(&self, s: usize) -> bool {
        !self.apple_alive[s] && self.occupant[self.map.index(self.map.spawn_points()[s])].is_none()
    }

    fn regrow_harvest(&mut self) -> u32 {
        let mut revive = Vec::new();
        for s in 0..self.apple_alive.len() {
            if !self.spawn_free(s) {
                continue;
            }
            let k = self.regrow_neighbors[s].iter().filter(|&&q| self.apple_alive[q as usize]).count();
            let p = self.config.regrowth.probability(k);
            if p > 0.0 && self.rng.random::<f64>() < p {
                revive.push(s);
            }
        }
        for &s in &revive {
            self.apple_alive[s] = true;
        }
        self.live_apples += revive.len();
        revive.len() as u32
    }

    fn regrow_cleanup(&mut self) -> (u32, bool) {
        let w = &self.config.waste;
        let density = self.waste_density();
        let p = w.apple_base_rate * (1.0 - density / w.saturation_threshold).max(0.0);
        let mut revived = 0;
        if p > 0.0 {
            for s in 0..self.apple_alive.len() {
                if self.spawn_free(s) && self.rng.random::<f64>() < p {
                    self.apple_alive[s] = true;
                    self.live_apples += 1;
                    revived += 1;
                }
            }
        }
        let mut spawned = false;
        if density < w.cap && self.waste_count < self.waste.len() && w.spawn_prob > 0.0 && self.rng.random::<f64>() < w.spawn_prob
        {
            let clean = self.waste.len() - self.waste_count;
            let mut pick = self.rng.random_range(0..clean);
            for cell in self.waste.iter_mut() {
                if !*cell {
                    if pick == 0 {
                        *cell = true;
                        break;
                    }
                    pick -= 1;
                }
            }
            self.waste_count += 1;
            spawned = true;
        }
        (revived, spawned)
    }

    pub fn observe(&self, agent: usize) -> Result<Observation, EnvError> {
        if agent >= self.agents.len() {
            return Err(EnvError::UnknownAgent(agent));
        }
        let side = self.config.view_size as usize;
        let mut data = vec![0.0f32; side * side * OBS_CHANNELS];
        self.observe_into(agent, &mut data);
        Ok(Observation { side, data })
    }

    pub fn observe_all(&self) -> Vec<Observation> {
        (0..self.agents.len()).map(|i| self.observe(i).expect("agent exists")).collect()
    }

    fn observe_into(&self, agent: usize, data: &mut [f32]) {
        let side = self.config.view_size as i32;
        let half = side / 2;
        let a = &self.agents[agent];
        let (fx, fy) = a.orientation.forward();
        let (rx, ry) = a.orientation.right();
        for row in 0..side {
            let ahead = half - row;
            for col in 0..side {
                let lateral = col - half;
                let p = Pos::new(a.pos.x + ahead * fx + lateral * rx, a.pos.y + ahead * fy + lateral * ry);
                let base = (row * side + col) as usize * OBS_CHANNELS;
                if self.map.cell(p) == Cell::Wall {
                    data[base] = 1.0;
                    continue;
                }
                if let Some(s) = self.map.spawn_at(p) {
                    if self.apple_alive[s] {
                        data[base + 1] = 1.0;
                    }
                }
                if let Some(w) = self.map.aquifer_at(p) {
                    if self.waste[w] {
                        data[base + 2] = 1.0;
                    }
                }
                if let Some(j) = self.occupant[self.map.index(p)] {
                    data[base + if j as usize == agent { 4 } else { 3 }] = 1.0;
                }
            }
        }
    }

    /// ASCII snapshot: agents as digits (mod 10), `@` apples, `~` waste.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for y in 0..self.map.height() as i32 {
            for x in 0..self.map.width() as i32 {
                let p = Pos::new(x, y);
                let ch = if let Some(j) = self.occupant[self.map.index(p)] {
                    char::from_digit(u32::from(j) % 10, 10).unwrap()
                } else if self.map.spawn_at(p).is_some_and(|s| self.apple_alive[s]) {
                    '@'
                } else if self.map.aquifer_at(p).is_some_and(|w| self.waste[w]) {
                    '~'
                } else {
                    match self.map.cell(p) {
                        Cell::Wall => '#',
                        Cell::Aquifer => 'w',
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

/// Exactly `round(fraction · len)` entries set, placed by a seeded shuffle.
fn pick_exact(len: usize, fraction: f64, rng: &mut StreamRng) -> Vec<bool> {
    let count = ((fraction * len as f64).round() as usize).min(len);
    let mut idx: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let mut out = vec![false; len];
    for &i in &idx[..count] {
        out[i] = true;
    }
    out
}

fn neighbor_lists(points: &[Pos], radius: f64) -> Vec<Vec<u32>> {
    let r2 = radius * radius;
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, q)| {
                    let dx = f64::from(p.x - q.x);
                    let dy = f64::from(p.y - q.y);
                    j != i && dx * dx + dy * dy <= r2 + 1e-12
                })
                .map(|(j, _)| j as u32)
                .collect()
        })
        .collect()
}
