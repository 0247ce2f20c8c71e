use mapf_core::env::{Cell, ProblemInstance};

pub const CELL_PX: usize = 16;

const FREE: [u8; 3] = [245, 245, 240];
const OBSTACLE: [u8; 3] = [40, 40, 48];
const GRID: [u8; 3] = [200, 200, 195];
const SEPARATOR: [u8; 3] = [255, 255, 255];
const AGENT_COLORS: [[u8; 3]; 8] = [
    [214, 39, 40],
    [31, 119, 180],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [23, 190, 207],
];

fn agent_letter(i: usize) -> char {
    (b'A' + (i % 26) as u8) as char
}

/// One grid per step: obstacles `#`, free `.`, agents as uppercase letters,
/// unoccupied goals as the matching lowercase letter.
pub fn ascii(inst: &ProblemInstance, positions: &[Vec<Cell>]) -> String {
    let map = &inst.map;
    let mut s = String::new();
    for (t, row) in positions.iter().enumerate() {
        s.push_str(&format!("t={t}\n"));
        let mut grid: Vec<char> = map.cells().iter().map(|&o| if o { '#' } else { '.' }).collect();
        for (i, &g) in inst.goals.iter().enumerate() {
            grid[map.index(g)] = agent_letter(i).to_ascii_lowercase();
        }
        for (i, &p) in row.iter().enumerate() {
            grid[map.index(p)] = agent_letter(i);
        }
        for line in grid.chunks(map.cols()) {
            s.extend(line);
            s.push('\n');
        }
        s.push('\n');
    }
    s
}

fn fill(img: &mut [u8], width: usize, x0: usize, y0: usize, w: usize, h: usize, color: [u8; 3]) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            img[(y * width + x) * 3..][..3].copy_from_slice(&color);
        }
    }
}

/// Frames side by side, 16 px per cell, one pixel column between frames.
pub fn png(inst: &ProblemInstance, positions: &[Vec<Cell>]) -> anyhow::Result<Vec<u8>> {
    let map = &inst.map;
    let (fw, fh) = (map.cols() * CELL_PX, map.rows() * CELL_PX);
    let width = positions.len() * (fw + 1) - 1;
    let mut img = vec![0u8; width * fh * 3];
    fill(&mut img, width, 0, 0, width, fh, SEPARATOR);
    for (t, row) in positions.iter().enumerate() {
        let ox = t * (fw + 1);
        for r in 0..map.rows() {
            for c in 0..map.cols() {
                let color = if map.is_free(Cell::new(r, c)) { FREE } else { OBSTACLE };
                fill(&mut img, width, ox + c * CELL_PX, r * CELL_PX, CELL_PX, CELL_PX, GRID);
                fill(&mut img, width, ox + c * CELL_PX + 1, r * CELL_PX + 1, CELL_PX - 1, CELL_PX - 1, color);
            }
        }
        for (i, &g) in inst.goals.iter().enumerate() {
            let color = AGENT_COLORS[i % AGENT_COLORS.len()];
            let (x, y) = (ox + g.col * CELL_PX, g.row * CELL_PX);
            // Goal: hollow square.
            fill(&mut img, width, x + 3, y + 3, CELL_PX - 6, 2, color);
            fill(&mut img, width, x + 3, y + CELL_PX - 5, CELL_PX - 6, 2, color);
            fill(&mut img, width, x + 3, y + 3, 2, CELL_PX - 6, color);
            fill(&mut img, width, x + CELL_PX - 5, y + 3, 2, CELL_PX - 6, color);
        }
        for (i, &p) in row.iter().enumerate() {
            let color = AGENT_COLORS[i % AGENT_COLORS.len()];
            fill(&mut img, width, ox + p.col * CELL_PX + 4, p.row * CELL_PX + 4, CELL_PX - 8, CELL_PX - 8, color);
        }
    }
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, width as u32, fh as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(&img)?;
    }
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mapf_core::env::GridMap;

    fn inst() -> ProblemInstance {
        let map = GridMap::from_ascii(&["...", ".#.", "..."]).unwrap();
        ProblemInstance::new(map, vec![Cell::new(0, 0)], vec![Cell::new(2, 2)]).unwrap()
    }

    #[test]
    fn ascii_frames() {
        let s = ascii(&inst(), &[vec![Cell::new(0, 0)], vec![Cell::new(0, 1)]]);
        assert_eq!(s, "t=0\nA..\n.#.\n..a\n\nt=1\n.A.\n.#.\n..a\n\n");
    }

    #[test]
    fn png_is_reproducible() {
        let p = [vec![Cell::new(0, 0)], vec![Cell::new(0, 1)]];
        let a = png(&inst(), &p).unwrap();
        assert_eq!(a, png(&inst(), &p).unwrap());
        assert_eq!(&a[1..4], b"PNG");
    }
}
