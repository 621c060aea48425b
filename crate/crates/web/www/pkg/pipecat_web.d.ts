/* tslint:disable */
/* eslint-disable */

/**
 * Placement only, in `optimal` or `feasible` mode, with the LP it solves.
 */
export function allocate(source: string, target: string, mode: string): string;

/**
 * Shipped benchmark programs as `[{name, source}]`.
 */
export function benchmarks(): string;

export function big_m_sweep(n_stages: number, m_max: number): string;

/**
 * Full compile. `report` is the structured report, `text` the CLI rendering.
 */
export function compile(source: string, target: string, rewrite: boolean, bits: number): string;

export function targets(): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly allocate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly benchmarks: () => [number, number];
    readonly big_m_sweep: (a: number, b: number) => [number, number];
    readonly compile: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly targets: () => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
