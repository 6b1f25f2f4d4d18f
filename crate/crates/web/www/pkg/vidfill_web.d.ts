/* tslint:disable */
/* eslint-disable */

/**
 * A synthetic scene and the latest removal result.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * RGBA pixels of `input`, `plate`, `output`, `mask` or `residual` at frame `t`.
     */
    frame_rgba(which: string, t: number): Uint8Array;
    frames(): number;
    height(): number;
    /**
     * A benchmark-suite scene; `frames` overrides its length.
     */
    constructor(seed: bigint, frames: number);
    /**
     * Runs the pipeline and returns the report as JSON. `denoiser` is
     * `prior`, `oracle` or `probe`; `fusion_steps` is a comma list.
     */
    run(op: boolean, reference: boolean, denoiser: string, amplitude: number, fusion_steps: string, seed: bigint): string;
    /**
     * RGBA of the time-by-row slice through `column`: one row per frame.
     */
    slice_rgba(which: string, column: number): Uint8Array;
    width(): number;
}

/**
 * The two-stream window layout as JSON: windows with their frames and
 * weights, and the frames where the stitched output changes window.
 */
export function fusion_plan(frames: number, window_len: number, stride: number, offset: number): string;

/**
 * Empirical variance per frame and correlation per frame lag of the
 * correlated initial noise, as JSON.
 */
export function noise_stats(rho: number, seed: bigint, frames: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_frame_rgba: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_frames: (a: number) => number;
    readonly demo_height: (a: number) => number;
    readonly demo_new: (a: bigint, b: number) => [number, number, number];
    readonly demo_run: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
    readonly demo_slice_rgba: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_width: (a: number) => number;
    readonly fusion_plan: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly noise_stats: (a: number, b: bigint, c: number) => [number, number, number, number];
    readonly __externref_table_alloc: () => number;
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
