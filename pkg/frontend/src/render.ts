// SVG rendering of layouts and the exploded 3D sketch. Geometry comes
// verbatim from the service's layout JSON; the only client-side work is the
// pose transform (rotate the centred contour, translate to the placement).

import type { BoardJson, LayoutJson, PartJson } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export function el<K extends string>(tag: K, attrs: Record<string, string> = {}): SVGElement {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  return node;
}

function rotatePoint(x: number, y: number, o: number): [number, number] {
  switch (((o % 4) + 4) % 4) {
    case 1:
      return [-y, x];
    case 2:
      return [-x, -y];
    case 3:
      return [y, -x];
    default:
      return [x, y];
  }
}

export function placedContour(
  part: PartJson,
  u: number,
  v: number,
  o: number,
  res: number,
): [number, number][] {
  const halfW = o % 2 === 0 ? part.lx / 2 : part.ly / 2;
  const halfH = o % 2 === 0 ? part.ly / 2 : part.lx / 2;
  return part.contour.map(([x, y]) => {
    const [rx, ry] = rotatePoint(x, y, o);
    return [rx + halfW + u * res, ry + halfH + v * res];
  });
}

function boundingBox(points: [number, number][][]): [number, number, number, number] {
  let x0 = Infinity,
    y0 = Infinity,
    x1 = -Infinity,
    y1 = -Infinity;
  for (const poly of points) {
    for (const [x, y] of poly) {
      x0 = Math.min(x0, x);
      y0 = Math.min(y0, y);
      x1 = Math.max(x1, x);
      y1 = Math.max(y1, y);
    }
  }
  return [x0, y0, x1, y1];
}

function pointsAttr(points: [number, number][]): string {
  return points.map(([x, y]) => `${x},${y}`).join(" ");
}

export interface RenderOptions {
  scale?: number; // CSS px per mm
}

/** Render one board: parts over a shaded bounding rectangle (the visible
 * shading is exactly the wasted area inside the layout's bounding box). */
export function renderBoard(
  layout: LayoutJson,
  board: BoardJson,
  opts: RenderOptions = {},
): SVGSVGElement {
  const res = layout.raster_res_mm;
  const scale = opts.scale ?? 0.5;
  const widthMm = board.width_px * res;
  const heightMm = board.height_px * res;
  const svg = el("svg", {
    width: String(widthMm * scale),
    height: String(heightMm * scale),
    viewBox: `0 0 ${widthMm} ${heightMm}`,
    class: "board",
  }) as SVGSVGElement;
  // y up: flip into SVG's y-down space
  const flip = el("g", { transform: `translate(0,${heightMm}) scale(1,-1)` });
  svg.appendChild(flip);

  flip.appendChild(
    el("rect", {
      x: "0",
      y: "0",
      width: String(widthMm),
      height: String(heightMm),
      class: "board-sheet",
      fill: "#f4efe6",
      stroke: "#999",
      "stroke-width": "0.6",
    }),
  );

  const byId = new Map(layout.parts.map((p) => [p.id, p]));
  const polys: [number, number][][] = [];
  for (const pl of board.placements) {
    const part = byId.get(pl.part);
    if (!part) continue;
    polys.push(placedContour(part, pl.u, pl.v, pl.o, res));
  }

  if (polys.length > 0) {
    const [x0, y0, x1, y1] = boundingBox(polys);
    flip.appendChild(
      el("rect", {
        x: String(x0),
        y: String(y0),
        width: String(x1 - x0),
        height: String(y1 - y0),
        class: "wasted",
        fill: "#79c879",
        opacity: "0.7",
      }),
    );
  }

  board.placements.forEach((pl, i) => {
    const poly = polys[i];
    if (!poly) return;
    flip.appendChild(
      el("polygon", {
        points: pointsAttr(poly),
        class: "part",
        "data-part": String(pl.part),
        fill: "#caa472",
        stroke: "#5a4631",
        "stroke-width": "0.8",
      }),
    );
  });
  return svg;
}

/** Render every board of a layout into a container. */
export function renderLayout(layout: LayoutJson, opts: RenderOptions = {}): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "layout";
  for (const board of layout.boards) {
    wrap.appendChild(renderBoard(layout, board, opts));
  }
  return wrap;
}

interface PlankDoc {
  center: [number, number, number];
  lx: number;
  ly: number;
  normal_axis?: number;
}

/** Exploded orthographic sketch of the 3D assembly (plank designs only):
 * each plank's outline projected with a fixed oblique axis, pushed apart
 * along its thickness normal. */
export function renderExploded(parts: PlankDoc[], explode = 18): SVGSVGElement {
  const project = (x: number, y: number, z: number): [number, number] => [
    x + 0.45 * y,
    -z - 0.3 * y,
  ];
  const polys: [number, number][][] = [];
  parts.forEach((p, i) => {
    const n = p.normal_axis ?? 2;
    const axes = [0, 1, 2].filter((a) => a !== n) as [number, number];
    const offset = [0, 0, 0];
    offset[n] = (i % 2 === 0 ? 1 : -1) * explode;
    const corners: [number, number][] = [
      [-p.lx / 2, -p.ly / 2],
      [p.lx / 2, -p.ly / 2],
      [p.lx / 2, p.ly / 2],
      [-p.lx / 2, p.ly / 2],
    ];
    polys.push(
      corners.map(([a, b]) => {
        const pt = [...p.center] as [number, number, number];
        pt[axes[0]] += a;
        pt[axes[1]] += b;
        return project(pt[0] + offset[0], pt[1] + offset[1], pt[2] + offset[2]);
      }),
    );
  });
  const [x0, y0, x1, y1] = boundingBox(polys);
  const pad = 10;
  const svg = el("svg", {
    viewBox: `${x0 - pad} ${y0 - pad} ${x1 - x0 + 2 * pad} ${y1 - y0 + 2 * pad}`,
    width: "260",
    class: "exploded",
  }) as SVGSVGElement;
  polys.forEach((poly, i) => {
    svg.appendChild(
      el("polygon", {
        points: pointsAttr(poly),
        "data-part": String(i),
        fill: "#caa47288",
        stroke: "#5a4631",
        "stroke-width": "1",
      }),
    );
  });
  return svg;
}
