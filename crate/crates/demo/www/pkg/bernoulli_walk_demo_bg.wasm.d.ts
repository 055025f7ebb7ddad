/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_table_free: (a: number, b: number) => void;
export const eigenvalue_paths: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const mixing_curves: (a: number, b: number, c: number, d: number) => [number, number, number];
export const spectrum_histogram: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
export const table_columns: (a: number) => number;
export const table_data: (a: number) => [number, number];
export const table_rows: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
