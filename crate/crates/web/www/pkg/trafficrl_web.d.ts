/* tslint:disable */
/* eslint-disable */

export class GridDemo {
    free(): void;
    [Symbol.dispose](): void;
    active(): number;
    arrivals(): number;
    clock(): number;
    lane_signals(): Uint8Array;
    /**
     * Flat `[x0, y0, x1, y1, ...]`, one quadruple per lane.
     */
    lanes(): Float64Array;
    constructor(rows: number, cols: number, lane_length: number, period: number, controller: string, seed: number);
    set_controller(name: string): void;
    /**
     * Advances `n` steps; returns the current waiting-time cost in seconds.
     */
    step(n: number): number;
    /**
     * Flat `[x, y, waiting, ...]`, one triple per vehicle.
     */
    vehicles(): Float64Array;
}

export function adjacency(rows: number, cols: number, lane_lengths: Float64Array): Float64Array;

/**
 * JSON array of per-controller results.
 */
export function compareControllers(rows: number, cols: number, lane_length: number, period: number, steps: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_griddemo_free: (a: number, b: number) => void;
    readonly adjacency: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly compareControllers: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly griddemo_active: (a: number) => number;
    readonly griddemo_arrivals: (a: number) => number;
    readonly griddemo_clock: (a: number) => number;
    readonly griddemo_lane_signals: (a: number) => [number, number];
    readonly griddemo_lanes: (a: number) => [number, number];
    readonly griddemo_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly griddemo_set_controller: (a: number, b: number, c: number) => [number, number];
    readonly griddemo_step: (a: number, b: number) => [number, number, number];
    readonly griddemo_vehicles: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
