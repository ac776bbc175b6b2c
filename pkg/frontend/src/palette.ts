/** Fixed label palette, mirroring the backend renderer exactly. */
export const LABEL_COLORS: Record<number, [number, number, number]> = {
  1: [255, 0, 0], // necrotic core: red
  2: [0, 255, 0], // edema: green
  4: [255, 255, 0], // enhancing tumor: yellow
};

export const REGION_NAMES = ["et", "tc", "wt"] as const;
export type RegionName = (typeof REGION_NAMES)[number];
