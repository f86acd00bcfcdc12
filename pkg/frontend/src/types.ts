// Payload shapes of the offcut service API. The server is the source of
// truth; the client never recomputes wastage or layout geometry.

export interface PlacementJson {
  part: number;
  u: number;
  v: number;
  o: number;
}

export interface BoardJson {
  width_px: number;
  height_px: number;
  placements: PlacementJson[];
}

export interface PartJson {
  id: number;
  contour: [number, number][];
  lx: number;
  ly: number;
}

export interface LayoutJson {
  raster_res_mm: number;
  parts: PartJson[];
  boards: BoardJson[];
}

export interface SuggestionJson {
  id: number;
  wastage: number;
  wastage_before: number | null;
  path_length: number;
  layout: LayoutJson;
}

export interface PathSnapshotJson {
  t: number;
  wastage: number;
  params: Record<string, number>;
  layout: LayoutJson;
}

export interface StatusJson {
  status: "idle" | "running";
  progress: number;
}

export interface OptimizeConfig {
  seed?: number;
  generations?: number;
  keep?: number;
  improve_iters?: number;
  workers?: number;
  raster_res_mm?: number;
  suggestions?: number;
}

export interface LockSize {
  part: number;
  dim: "lx" | "ly";
  value?: number;
}

export type EditMode = "strict" | "flush" | "override";

export interface ViewState {
  selected: number | null;
  t: number;
  locks: Set<string>; // "part:dim"
  editMode: EditMode;
}

export function initialViewState(): ViewState {
  return { selected: null, t: 0, locks: new Set(), editMode: "strict" };
}
