#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_search_path1_found_at_root(void)
{
    int values[] = {6};
    struct node *root = bst_from_array(values, 1);
    TEST_ASSERT_EQUAL_PTR(root, search(root, 6));
    free_tree(root);
}
