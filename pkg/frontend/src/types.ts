// Message and entity shapes of the tracking service stream/query API,
// plus runtime validators: a malformed stream message must be dropped
// with a console diagnostic, never rendered.

export interface ZoneShape {
  id: string;
  name: string;
  polygon: [number, number][];
}

export interface FloorMapInfo {
  width: number;
  height: number;
  zones: ZoneShape[];
}

export interface PipeInfo {
  pipe_id: string;
  material: string;
  status: string;
  current_zone: string;
  position: { x: number; y: number; t: number } | null;
}

export interface PositionUpdate {
  pipe_id: string;
  x: number;
  y: number;
  zone: string;
  t: number;
}

export interface ClusterInfo {
  centroid: [number, number];
  members: string[];
}

export interface TrackingEvent {
  event_id: number;
  pipe_id: string;
  kind: string;
  from_zone: string | null;
  to_zone: string | null;
  t: number;
}

export type StreamMessage =
  | { type: "snapshot"; map: FloorMapInfo; pipes: PipeInfo[] }
  | { type: "positions"; positions: PositionUpdate[] }
  | { type: "clusters"; t: number; clusters: ClusterInfo[] }
  | { type: "event"; event: TrackingEvent };

function isNum(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

function isStr(x: unknown): x is string {
  return typeof x === "string";
}

function validPosition(p: any): p is PositionUpdate {
  return p && isStr(p.pipe_id) && isNum(p.x) && isNum(p.y) &&
    isStr(p.zone) && isNum(p.t);
}

function validCluster(c: any): c is ClusterInfo {
  return c && Array.isArray(c.centroid) && c.centroid.length === 2 &&
    isNum(c.centroid[0]) && isNum(c.centroid[1]) &&
    Array.isArray(c.members) && c.members.every(isStr);
}

export function validEvent(e: any): e is TrackingEvent {
  return e && isNum(e.event_id) && isStr(e.pipe_id) && isStr(e.kind) &&
    isNum(e.t) &&
    (e.from_zone === null || e.from_zone === undefined || isStr(e.from_zone)) &&
    (e.to_zone === null || e.to_zone === undefined || isStr(e.to_zone));
}

/** Parse one raw stream payload; null means "reject" (caller logs it). */
export function parseMessage(raw: unknown): StreamMessage | null {
  if (typeof raw !== "object" || raw === null) return null;
  const msg = raw as any;
  switch (msg.type) {
    case "snapshot": {
      const map = msg.map;
      if (!map || !isNum(map.width) || !isNum(map.height) ||
          !Array.isArray(map.zones) || !Array.isArray(msg.pipes)) {
        return null;
      }
      return { type: "snapshot", map, pipes: msg.pipes };
    }
    case "positions":
      if (!Array.isArray(msg.positions) || !msg.positions.every(validPosition)) {
        return null;
      }
      return { type: "positions", positions: msg.positions };
    case "clusters":
      if (!isNum(msg.t) || !Array.isArray(msg.clusters) ||
          !msg.clusters.every(validCluster)) {
        return null;
      }
      return { type: "clusters", t: msg.t, clusters: msg.clusters };
    case "event": {
      if (!validEvent(msg)) return null;
      const { event_id, pipe_id, kind, from_zone, to_zone, t } = msg;
      return {
        type: "event",
        event: {
          event_id, pipe_id, kind, t,
          from_zone: from_zone ?? null,
          to_zone: to_zone ?? null,
        },
      };
    }
    default:
      return null;
  }
}
