/* tslint:disable */
/* eslint-disable */

/**
 * Periodic square lattice driven by the PCA or single-site Gibbs sampler.
 */
export class LatticeDemo {
    free(): void;
    [Symbol.dispose](): void;
    flips(): number;
    magnetization(): number;
    constructor(side: number, j0: number, delta: number, seed: bigint, gibbs: boolean);
    spins(): Int8Array;
    /**
     * Advances `count` steps (a Gibbs step is one sweep); returns the flips
     * in the last of them.
     */
    step(count: number): number;
    time(): number;
}

/**
 * Laws of the magnetization on `k = 0..=n` up spins for the Curie-Weiss
 * model, flattened as `[gibbs.., pca.., tilde..]`, each of length `n + 1`.
 */
export function cw_laws(n: number, j: number, delta: number, full: boolean): Float64Array;

/**
 * Exact `TV(π^PCA, π^G)` and its bound `sqrt(Δ(δ))` on an open `lx × ly`
 * lattice, flattened as `[tv_0, bound_0, tv_1, bound_1, ...]`.
 */
export function tv_curve(lx: number, ly: number, j0: number, deltas: Float64Array): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_latticedemo_free: (a: number, b: number) => void;
    readonly cw_laws: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly latticedemo_flips: (a: number) => number;
    readonly latticedemo_magnetization: (a: number) => number;
    readonly latticedemo_new: (a: number, b: number, c: number, d: bigint, e: number) => [number, number, number];
    readonly latticedemo_spins: (a: number) => [number, number];
    readonly latticedemo_step: (a: number, b: number) => [number, number, number];
    readonly latticedemo_time: (a: number) => number;
    readonly tv_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
