//! Maze layouts parsed from plain-text grids.
//!
//! `#` wall, `.` free, `S` start region, `G` goal region. The bundled
//! default mirrors the antmaze-large wall topology on a 7x10 interior.

use crate::error::{Error, Result};

pub const DEFAULT_MAZE: &str = "\
############
#....#....G#
#.##.#.#.#.#
#......#...#
#.####.###.#
#..#.......#
##.#.#.#.###
#S...#.....#
############";

/// Small open arena used by tests and the tabular gridworld checks.
pub const OPEN_MAZE: &str = "\
#######
#S....#
#.....#
#....G#
#######";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Free,
    Start,
    Goal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MazeLayout {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
}

impl MazeLayout {
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.is_empty() {
            return Err(Error::Format("empty maze".into()));
        }
        let cols = lines[0].chars().count();
        let rows = lines.len();
        let mut cells = Vec::with_capacity(rows * cols);
        for line in &lines {
            if line.chars().count() != cols {
                return Err(Error::Format("ragged maze rows".into()));
            }
            for ch in line.chars() {
                cells.push(match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Free,
                    'S' => Cell::Start,
                    'G' => Cell::Goal,
                    other => return Err(Error::Format(format!("bad maze char {other:?}"))),
                });
            }
        }
        let maze = MazeLayout { rows, cols, cells };
        if maze.start_cells().is_empty() {
            return Err(Error::Format("maze has no start cells".into()));
        }
        if !maze.is_connected() {
            return Err(Error::Format("maze free space is not connected".into()));
        }
        Ok(maze)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    /// Cell containing a continuous position: x maps to columns, y to rows.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let (col, row) = (x.floor() as usize, y.floor() as usize);
        if row < self.rows && col < self.cols {
            Some((row, col))
        } else {
            None
        }
    }

    pub fn is_free_cell(&self, row: usize, col: usize) -> bool {
        self.cell(row, col) != Cell::Wall
    }

    pub fn is_free_pos(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y)
            .map(|(r, c)| self.is_free_cell(r, c))
            .unwrap_or(false)
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        self.cells_matching(|c| c != Cell::Wall)
    }

    pub fn start_cells(&self) -> Vec<(usize, usize)> {
        let s = self.cells_matching(|c| c == Cell::Start);
        if s.is_empty() {
            self.free_cells()
        } else {
            s
        }
    }

    pub fn goal_cells(&self) -> Vec<(usize, usize)> {
        self.cells_matching(|c| c == Cell::Goal)
    }

    fn cells_matching(&self, pred: impl Fn(Cell) -> bool) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                if pred(self.cell(r, c)) {
                    out.push((r, c));
                }
            }
        }
        out
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (col as f64 + 0.5, row as f64 + 0.5)
    }

    /// BFS step distances from `from` over 4-connected free cells.
    /// Unreachable cells get `u32::MAX`.
    pub fn bfs_from(&self, from: (usize, usize)) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.rows * self.cols];
        let mut queue = std::collections::VecDeque::new();
        dist[from.0 * self.cols + from.1] = 0;
        queue.push_back(from);
        while let Some((r, c)) = queue.pop_front() {
            let d = dist[r * self.cols + c];
            for (nr, nc) in self.neighbors4(r, c) {
                let idx = nr * self.cols + nc;
                if dist[idx] == u32::MAX {
                    dist[idx] = d + 1;
                    queue.push_back((nr, nc));
                }
            }
        }
        dist
    }

    pub fn neighbors4(&self, r: usize, c: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(4);
        let candidates = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        for (nr, nc) in candidates {
            if nr < self.rows && nc < self.cols && self.is_free_cell(nr, nc) {
                out.push((nr, nc));
            }
        }
        out
    }

    fn is_connected(&self) -> bool {
        let free = self.free_cells();
        if free.is_empty() {
            return false;
        }
        let dist = self.bfs_from(free[0]);
        free.iter().all(|&(r, c)| dist[r * self.cols + c] != u32::MAX)
    }

    /// Render back to the text format (used by dataset provenance tests).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                s.push(match self.cell(r, c) {
                    Cell::Wall => '#',
                    Cell::Free => '.',
                    Cell::Start => 'S',
                    Cell::Goal => 'G',
                });
            }
            if r + 1 < self.rows {
                s.push('\n');
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_maze_parses_and_is_connected() {
        let m = MazeLayout::parse(DEFAULT_MAZE).unwrap();
        assert_eq!(m.rows(), 9);
        assert_eq!(m.cols(), 12);
        assert_eq!(m.goal_cells().len(), 1);
        assert_eq!(m.start_cells().len(), 1);
    }

    #[test]
    fn text_roundtrip() {
        let m = MazeLayout::parse(DEFAULT_MAZE).unwrap();
        let again = MazeLayout::parse(&m.to_text()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn disconnected_maze_rejected() {
        let bad = "#####\n#S#.#\n#####";
        assert!(MazeLayout::parse(bad).is_err());
    }

    #[test]
    fn bfs_distances_monotone_along_corridor() {
        let m = MazeLayout::parse(OPEN_MAZE).unwrap();
        let d = m.bfs_from((1, 1));
        assert_eq!(d[1 * m.cols() + 2], 1);
        assert_eq!(d[3 * m.cols() + 5], 6);
    }
}
