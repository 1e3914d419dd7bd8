import type { ApiClient } from "./api.js";
import type { SessionView } from "./types.js";

export interface GalleryTile {
  index: number;
  rawScore: number;
  normalizedScore: number;
  selected: boolean;
  imageUrl: string;
}

// Tiles ordered ascending by the server's normalized score (the selected
// exemplar is the minimum); equal scores keep candidate-index order,
// matching the engine's tie-break.
export function galleryTiles(session: SessionView, api: ApiClient): GalleryTile[] {
  const block = session.candidates;
  if (!block) return [];
  const tiles: GalleryTile[] = [];
  for (let i = 0; i < block.count; i++) {
    tiles.push({
      index: i,
      rawScore: block.raw_scores[i],
      normalizedScore: block.normalized_scores[i],
      selected: i === block.chosen_index,
      imageUrl: api.candidateFrameUrl(session.id, i),
    });
  }
  tiles.sort((a, b) =>
    a.normalizedScore === b.normalizedScore
      ? a.index - b.index
      : a.normalizedScore - b.normalizedScore,
  );
  return tiles;
}

export function formatScore(value: number): string {
  return value.toFixed(4);
}
