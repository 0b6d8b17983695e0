/* tslint:disable */
/* eslint-disable */

/**
 * Membership grid of a quasi-metric ball on the (x1, x3) plane at
 * x2 = 0: row-major bytes, 1 inside, 0 outside. The plane shows the
 * anisotropy of the weighted geometry.
 */
export function ball_slice(preset: string, center: string, radius: number, half_extent1: number, half_extent3: number, resolution: number, seed: bigint): Uint8Array;

/**
 * Classify a compact domain descriptor; returns the classification
 * JSON with the reason chain.
 */
export function classify_domain(preset: string, domain: string, seed: bigint): string;

/**
 * Kernel decay along a dilated ray: JSON list of [lambda, kernel].
 */
export function decay_curve(preset: string, y: string, lambdas: string, seed: bigint): string;

/**
 * Distance estimate plus a sampled trajectory of the best path.
 */
export function distance_with_path(preset: string, x: string, y: string, budget: string, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly ball_slice: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
    readonly classify_domain: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly decay_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
    readonly distance_with_path: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
