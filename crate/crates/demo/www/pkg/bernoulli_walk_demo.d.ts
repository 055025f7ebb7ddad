/* tslint:disable */
/* eslint-disable */

/**
 * A row-major table of `columns` floats per row.
 */
export class Table {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly columns: number;
    /**
     * The cells as a `Float64Array`.
     */
    readonly data: Float64Array;
    readonly rows: number;
}

export function eigenvalue_paths(kind: string, n: number, eta_max: number, seed: bigint): Table;

export function mixing_curves(kind: string, n: number, eta_max: number): Table;

export function spectrum_histogram(kind: string, n: number, draws: number, bins: number, seed: bigint): Table;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_table_free: (a: number, b: number) => void;
    readonly eigenvalue_paths: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly mixing_curves: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly spectrum_histogram: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
    readonly table_columns: (a: number) => number;
    readonly table_data: (a: number) => [number, number];
    readonly table_rows: (a: number) => number;
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
