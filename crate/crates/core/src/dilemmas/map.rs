use std::fmt;

use serde::{Deserialize, Serialize};

use super::EnvError;

/// Static terrain of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Wall,
    Floor,
    AppleSpawn,
    Aquifer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }
}

/// Parsed map layout. Dynamic contents (live apples, waste) live in the env state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    starts: Vec<Pos>,
    spawn_points: Vec<Pos>,
    aquifer: Vec<Pos>,
    spawn_index: Vec<Option<u32>>,
    aquifer_index: Vec<Option<u32>>,
}

const HARVEST_SMALL: &str = include_str!("../../maps/harvest_small.txt");
const CLEANUP_SMALL: &str = include_str!("../../maps/cleanup_small.txt");
const HARVEST_MICRO: &str = include_str!("../../maps/harvest_micro.txt");
const CLEANUP_MICRO: &str = include_str!("../../maps/cleanup_micro.txt");

/// Names of the maps compiled into the crate.
pub const BUILTIN_MAPS: [&str; 4] = ["harvest-small", "cleanup-small", "harvest-micro", "cleanup-micro"];

impl GridMap {
    /// Parses an ASCII map: `#` wall, `.` empty, `A` apple spawn point,
    /// `W` aquifer, `S` agent start. Starts are numbered in reading order.
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(EnvError::Map("empty map".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut cells = Vec::with_capacity(width * height);
        let mut starts = Vec::new();
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(EnvError::Map(format!("row {y} has width {}, expected {width}", row.chars().count())));
            }
            for (x, ch) in row.chars().enumerate() {
                let cell = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Floor,
                    'A' => Cell::AppleSpawn,
                    'W' => Cell::Aquifer,
                    'S' => {
                        starts.push(Pos::new(x as i32, y as i32));
                        Cell::Floor
                    }
                    other => return Err(EnvError::Map(format!("unknown map symbol `{other}` at ({x}, {y})"))),
                };
                cells.push(cell);
            }
        }
        Ok(Self::from_cells(width, height, cells, starts))
    }

    fn from_cells(width: usize, height: usize, cells: Vec<Cell>, starts: Vec<Pos>) -> Self {
        let mut spawn_points = Vec::new();
        let mut aquifer = Vec::new();
        let mut spawn_index = vec![None; cells.len()];
        let mut aquifer_index = vec![None; cells.len()];
        for (i, c) in cells.iter().enumerate() {
            let pos = Pos::new((i % width) as i32, (i / width) as i32);
            match c {
                Cell::AppleSpawn => {
                    spawn_index[i] = Some(spawn_points.len() as u32);
                    spawn_points.push(pos);
                }
                Cell::Aquifer => {
                    aquifer_index[i] = Some(aquifer.len() as u32);
                    aquifer.push(pos);
                }
                _ => {}
            }
        }
        GridMap { width, height, cells, starts, spawn_points, aquifer, spawn_index, aquifer_index }
    }

    pub fn builtin(name: &str) -> Result<Self, EnvError> {
        let text = match name {
            "harvest-small" => HARVEST_SMALL,
            "cleanup-small" => CLEANUP_SMALL,
            "harvest-micro" => HARVEST_MICRO,
            "cleanup-micro" => CLEANUP_MICRO,
            other => return Err(EnvError::Map(format!("unknown built-in map `{other}`"))),
        };
        Self::parse(text)
    }

    /// Repeats the map `copies` times side by side. Start points are ordered
    /// tile by tile, so the first `k · starts` agents fill whole tiles.
    pub fn tiled(&self, copies: usize) -> Self {
        assert!(copies >= 1);
        let width = self.width * copies;
        let mut cells = Vec::with_capacity(width * self.height);
        for y in 0..self.height {
            for _ in 0..copies {
                cells.extend_from_slice(&self.cells[y * self.width..(y + 1) * self.width]);
            }
        }
        let mut starts = Vec::with_capacity(self.starts.len() * copies);
        for k in 0..copies {
            let dx = (k * self.width) as i32;
            starts.extend(self.starts.iter().map(|p| Pos::new(p.x + dx, p.y)));
        }
        Self::from_cells(width, self.height, cells, starts)
    }

    /// Scales the map for `n_agents` keeping apple spawn points per agent at
    /// least at the base map's ratio: tiles `ceil(n / starts)` copies.
    pub fn scaled_for(&self, n_agents: usize) -> Self {
        let base = self.starts.len().max(1);
        let copies = n_agents.div_ceil(base).max(1);
        self.tiled(copies)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn starts(&self) -> &[Pos] {
        &self.starts
    }

    pub fn spawn_points(&self) -> &[Pos] {
        &self.spawn_points
    }

    pub fn aquifer(&self) -> &[Pos] {
        &self.aquifer
    }

    #[inline]
    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    #[inline]
    pub fn index(&self, p: Pos) -> usize {
        p.y as usize * self.width + p.x as usize
    }

    /// Terrain at `p`; out-of-bounds reads as wall.
    #[inline]
    pub fn cell(&self, p: Pos) -> Cell {
        if self.in_bounds(p) {
            self.cells[self.index(p)]
        } else {
            Cell::Wall
        }
    }

    #[inline]
    pub fn spawn_at(&self, p: Pos) -> Option<usize> {
        if self.in_bounds(p) {
            self.spawn_index[self.index(p)].map(|i| i as usize)
        } else {
            None
        }
    }

    #[inline]
    pub fn aquifer_at(&self, p: Pos) -> Option<usize> {
        if self.in_bounds(p) {
            self.aquifer_index[self.index(p)].map(|i| i as usize)
        } else {
            None
        }
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in 0..self.height {
            for x in 0..self.width {
                let p = Pos::new(x as i32, y as i32);
                let ch = if self.starts.contains(&p) {
                    'S'
                } else {
                    match self.cell(p) {
                        Cell::Wall => '#',
                        Cell::Floor => '.',
                        Cell::AppleSpawn => 'A',
                        Cell::Aquifer => 'W',
                    }
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
