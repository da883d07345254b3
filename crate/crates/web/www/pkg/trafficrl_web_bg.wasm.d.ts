/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_griddemo_free: (a: number, b: number) => void;
export const adjacency: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const compareControllers: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const griddemo_active: (a: number) => number;
export const griddemo_arrivals: (a: number) => number;
export const griddemo_clock: (a: number) => number;
export const griddemo_lane_signals: (a: number) => [number, number];
export const griddemo_lanes: (a: number) => [number, number];
export const griddemo_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const griddemo_set_controller: (a: number, b: number, c: number) => [number, number];
export const griddemo_step: (a: number, b: number) => [number, number, number];
export const griddemo_vehicles: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
