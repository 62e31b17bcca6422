//! ASCII grid-map parsing and validation.
//!
//! Characters: `#` wall, `.` floor, `~` river, `F` fire, `S` spawn. Maps must
//! be rectangular, walled on the border, contain at least one spawn, and have
//! every non-wall cell reachable from a spawn (interactions would otherwise
//! target cells no agent can ever reach).

use crate::{Error, Result};
use std::collections::VecDeque;

use super::Pos;

const MAX_SIDE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Floor,
    River,
    Fire,
    Spawn,
}

#[derive(Debug, Clone)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    cells: Vec<Cell>,
    pub spawns: Vec<Pos>,
}

impl GridMap {
    pub fn parse(text: &str) -> Result<GridMap> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.is_empty() {
            return Err(Error::Corrupt("map has no rows".into()));
        }
        let height = lines.len();
        let width = lines[0].chars().count();
        if height < 3 || width < 3 {
            return Err(Error::Corrupt("map smaller than 3x3".into()));
        }
        if height > MAX_SIDE || width > MAX_SIDE {
            return Err(Error::Corrupt(format!("map larger than {MAX_SIDE} cells per side")));
        }
        let mut cells = Vec::with_capacity(width * height);
        let mut spawns = Vec::new();
        for (y, line) in lines.iter().enumerate() {
            let row: Vec<char> = line.chars().collect();
            if row.len() != width {
                return Err(Error::Corrupt(format!(
                    "row {y} has {} cells, expected {width}",
                    row.len()
                )));
            }
            for (x, ch) in row.iter().enumerate() {
                let cell = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Floor,
                    '~' => Cell::River,
                    'F' => Cell::Fire,
                    'S' => {
                        spawns.push((x as i32, y as i32));
                        Cell::Spawn
                    }
                    other => {
                        return Err(Error::Corrupt(format!(
                            "unknown map character {other:?} at ({x}, {y})"
                        )))
                    }
                };
                cells.push(cell);
            }
        }
        let map = GridMap {
            width,
            height,
            cells,
            spawns,
        };
        map.validate()?;
        Ok(map)
    }

    fn validate(&self) -> Result<()> {
        if self.spawns.is_empty() {
            return Err(Error::Corrupt("map has no spawn cell".into()));
        }
        for x in 0..self.width as i32 {
            for y in [0, self.height as i32 - 1] {
                if self.cell((x, y)) != Cell::Wall {
                    return Err(Error::Corrupt(format!("border cell ({x}, {y}) is not a wall")));
                }
            }
        }
        for y in 0..self.height as i32 {
            for x in [0, self.width as i32 - 1] {
                if self.cell((x, y)) != Cell::Wall {
                    return Err(Error::Corrupt(format!("border cell ({x}, {y}) is not a wall")));
                }
            }
        }
        // Flood fill from the first spawn; all non-wall cells must be reached.
        let mut seen = vec![false; self.width * self.height];
        let mut queue = VecDeque::new();
        let start = self.spawns[0];
        seen[self.index(start)] = true;
        queue.push_back(start);
        while let Some((x, y)) = queue.pop_front() {
            for (dx, dy) in [(0, -1), (0, 1), (-1, 0), (1, 0)] {
                let p = (x + dx, y + dy);
                if self.is_wall(p) {
                    continue;
                }
                let idx = self.index(p);
                if !seen[idx] {
                    seen[idx] = true;
                    queue.push_back(p);
                }
            }
        }
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                if self.cell((x, y)) != Cell::Wall && !seen[self.index((x, y))] {
                    return Err(Error::Corrupt(format!(
                        "cell ({x}, {y}) unreachable from spawn"
                    )));
                }
            }
        }
        Ok(())
    }

    fn index(&self, (x, y): Pos) -> usize {
        y as usize * self.width + x as usize
    }

    /// Terrain at a position; everything outside the map reads as wall.
    pub fn cell(&self, (x, y): Pos) -> Cell {
        if x < 0 || y < 0 || x >= self.width as i32 || y >= self.height as i32 {
            return Cell::Wall;
        }
        self.cells[y as usize * self.width + x as usize]
    }

    pub fn is_wall(&self, p: Pos) -> bool {
        self.cell(p) == Cell::Wall
    }

    /// All positions holding the given terrain tag.
    pub fn cells_of(&self, tag: Cell) -> Vec<Pos> {
        let mut out = Vec::new();
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                if self.cell((x, y)) == tag {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_minimal_map() {
        let m = GridMap::parse("###\n#S#\n###").unwrap();
        assert_eq!((m.width, m.height), (3, 3));
        assert_eq!(m.spawns, vec![(1, 1)]);
        assert_eq!(m.cell((1, 1)), Cell::Spawn);
        assert!(m.is_wall((0, 0)));
        assert!(m.is_wall((-1, 5)));
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(GridMap::parse("###\n#S##\n###").is_err());
    }

    #[test]
    fn rejects_missing_spawn() {
        assert!(GridMap::parse("###\n#.#\n###").is_err());
    }

    #[test]
    fn rejects_open_border() {
        assert!(GridMap::parse("###\n#S.\n###").is_err());
    }

    #[test]
    fn rejects_unknown_characters() {
        assert!(GridMap::parse("###\n#S#\n#x#\n###").is_err());
    }

    #[test]
    fn rejects_unreachable_pockets() {
        let text = "#####\n#S#.#\n#####";
        assert!(GridMap::parse(text).is_err());
    }

    #[test]
    fn rejects_tiny_and_empty_inputs() {
        assert!(GridMap::parse("").is_err());
        assert!(GridMap::parse("#\n#\n#").is_err());
        assert!(GridMap::parse("##\n##").is_err());
    }

    #[test]
    fn accepts_rivers_and_fires() {
        let text = "#####\n#S~F#\n#####";
        let m = GridMap::parse(text).unwrap();
        assert_eq!(m.cell((2, 1)), Cell::River);
        assert_eq!(m.cell((3, 1)), Cell::Fire);
        assert_eq!(m.cells_of(Cell::Fire), vec![(3, 1)]);
    }

    #[test]
    fn built_in_maps_are_valid() {
        for kind in [
            super::super::EnvKind::PacMen,
            super::super::EnvKind::WindyMaze,
            super::super::EnvKind::Firefighters,
        ] {
            let env = super::super::Env::with_defaults(kind);
            assert!(!env.map().spawns.is_empty());
        }
    }
}
