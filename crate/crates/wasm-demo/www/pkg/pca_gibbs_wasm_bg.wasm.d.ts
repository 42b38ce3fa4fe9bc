/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_latticedemo_free: (a: number, b: number) => void;
export const cw_laws: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const latticedemo_flips: (a: number) => number;
export const latticedemo_magnetization: (a: number) => number;
export const latticedemo_new: (a: number, b: number, c: number, d: bigint, e: number) => [number, number, number];
export const latticedemo_spins: (a: number) => [number, number];
export const latticedemo_step: (a: number, b: number) => [number, number, number];
export const latticedemo_time: (a: number) => number;
export const tv_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
